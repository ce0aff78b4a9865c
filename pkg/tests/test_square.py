"""Grid structure, contexts, the triple eigenbasis and the exact functional."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from pmlab.errors import ValidationError
from pmlab.qcore import overlap, projectors, random_state
from pmlab.square import (
    GRID_CELLS,
    Context,
    GridIndex,
    build_square,
    cabello_value_exact,
    commutator_norm,
    contexts,
    grid_contexts,
    observable_for_cell,
    projector_for_cell,
    triple_spec,
)

from conftest import rng_from


class TestGridIndex:
    def test_bounds(self):
        with pytest.raises(ValidationError):
            GridIndex(0, 1)
        with pytest.raises(ValidationError):
            GridIndex(1, 4)

    def test_flat_encoding(self):
        assert GridIndex(1, 1).flat == 0
        assert GridIndex(2, 1).flat == 3
        assert GridIndex(3, 3).flat == 8


class TestBuildSquare:
    def test_zz_cell_is_diagonal(self):
        square = build_square()
        np.testing.assert_allclose(
            square.observable(GridIndex(1, 3)).matrix, np.diag([1, -1, -1, 1])
        )

    def test_same_row_commutes(self):
        square = build_square()
        a = square.observable(GridIndex(1, 1))
        b = square.observable(GridIndex(1, 2))
        assert commutator_norm(a, b) <= 1e-12

    def test_different_row_and_column_does_not_commute(self):
        square = build_square()
        a = square.observable(GridIndex(1, 1))
        b = square.observable(GridIndex(2, 2))
        assert commutator_norm(a, b) > 1e-6

    def test_commuting_pairs_are_exactly_the_shared_lines(self):
        # 9 same-row plus 9 same-column pairs commute, nothing else does.
        square = build_square()
        commuting = 0
        for a, b in itertools.combinations(GRID_CELLS, 2):
            norm = commutator_norm(square.observable(a), square.observable(b))
            same_line = a.row == b.row or a.col == b.col
            if norm <= 1e-12:
                commuting += 1
                assert same_line
            else:
                assert not same_line
        assert commuting == 18

    def test_labels(self):
        square = build_square()
        assert square.observable(GridIndex(1, 1)).label == "ZI"
        assert square.observable(GridIndex(3, 3)).label == "YY"


class TestContexts:
    def test_six_contexts_with_signs(self):
        ctxs = contexts(build_square())
        assert [c.label for c in ctxs] == ["r1", "r2", "r3", "c1", "c2", "c3"]
        assert [c.sign for c in ctxs] == [1, 1, 1, 1, 1, -1]

    def test_product_matches_sign_in_every_member_order(self):
        square = build_square()
        for ctx in grid_contexts():
            for order in itertools.permutations(ctx.members):
                product = np.eye(4, dtype=complex)
                for idx in order:
                    product = product @ square.observable(idx).matrix
                np.testing.assert_allclose(
                    product, ctx.sign * np.eye(4), atol=1e-12
                )

    def test_members_are_grid_ordered(self):
        ctxs = grid_contexts()
        assert ctxs[0].members == (GridIndex(1, 1), GridIndex(1, 2), GridIndex(1, 3))
        assert ctxs[5].members == (GridIndex(1, 3), GridIndex(2, 3), GridIndex(3, 3))


class TestCabelloValueExact:
    def test_singlet(self, singlet):
        assert cabello_value_exact(singlet) == pytest.approx(6.0, abs=1e-9)

    def test_state_00(self, state_00):
        assert cabello_value_exact(state_00) == pytest.approx(6.0, abs=1e-9)

    def test_state_independence_fuzz(self):
        gen = rng_from(31)
        for _ in range(1000):
            assert cabello_value_exact(random_state(gen)) == pytest.approx(6.0, abs=1e-9)


class TestTripleSpec:
    def test_tabulated_eigenvalues(self):
        spec = triple_spec()
        assert spec.names == ("+-+", "-++", "++-", "---")
        assert spec.eigenvalues == ((1, -1, 1), (-1, 1, 1), (1, 1, -1), (-1, -1, -1))
        for vec, vals in zip(spec.eigenvectors, spec.eigenvalues):
            for obs, val in zip(spec.observables, vals):
                np.testing.assert_allclose(
                    obs.matrix @ vec.amps, val * vec.amps, atol=1e-12
                )

    def test_phi_plus_entry(self):
        spec = triple_spec()
        expected = np.array([1, 0, 0, 1]) / np.sqrt(2)
        np.testing.assert_allclose(spec.eigenvectors[0].amps, expected)

    def test_orthonormal_basis(self):
        spec = triple_spec()
        for i, a in enumerate(spec.eigenvectors):
            for j, b in enumerate(spec.eigenvectors):
                expected = 1.0 if i == j else 0.0
                assert abs(overlap(a, b)) == pytest.approx(expected, abs=1e-12)

    def test_joint_distribution_supported_on_four_patterns(self):
        # Sum over the tabulated patterns of <psi|P1 P2 P3|psi> is one and the
        # other four sign patterns carry exactly zero weight.
        spec = triple_spec()
        projs = [projectors(obs) for obs in spec.observables]

        def weight(state, signs):
            product = np.eye(4, dtype=complex)
            for (plus, minus), sign in zip(projs, signs):
                product = product @ (plus if sign == 1 else minus).matrix
            return float(np.vdot(state.amps, product @ state.amps).real)

        gen = rng_from(17)
        tabulated = set(spec.eigenvalues)
        for _ in range(100):
            state = random_state(gen)
            total = 0.0
            for signs in itertools.product((1, -1), repeat=3):
                w = weight(state, signs)
                if signs in tabulated:
                    total += w
                else:
                    assert w == pytest.approx(0.0, abs=1e-12)
            assert total == pytest.approx(1.0, abs=1e-12)


class TestCellResolution:
    def test_triple_positions(self):
        assert observable_for_cell(1).label == "XX"
        assert observable_for_cell(3).label == "ZZ"

    def test_grid_cells(self):
        assert observable_for_cell(GridIndex(3, 3)).label == "YY"

    def test_invalid_cells(self):
        with pytest.raises(ValidationError):
            observable_for_cell(4)
        with pytest.raises(ValidationError):
            observable_for_cell("r1")

    def test_projector_cache_signs(self):
        plus = projector_for_cell(GridIndex(1, 3), 1)
        np.testing.assert_allclose(plus.matrix, np.diag([1.0, 0.0, 0.0, 1.0]))
        with pytest.raises(ValidationError):
            projector_for_cell(GridIndex(1, 3), 0)

    def test_triple_and_column_three_share_operators(self):
        # The triple is column 3 of the grid, up to ordering.
        grid_ops = {
            observable_for_cell(GridIndex(r, 3)).label for r in (1, 2, 3)
        }
        triple_ops = {obs.label for obs in triple_spec().observables}
        assert grid_ops == triple_ops


def test_context_type_rejects_nothing_silently():
    # Context is a passive record; building one by hand keeps fields intact.
    ctx = Context(kind="row", index=1, members=grid_contexts()[0].members, sign=1)
    assert ctx.label == "r1"
