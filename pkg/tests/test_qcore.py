"""Exact quantum core: states, observables, Born rule, collapse, chains."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmlab.errors import ImpossibleBranchError, ValidationError
from pmlab.qcore import (
    ID2,
    Observable,
    OutcomeDistribution,
    StateVector,
    born,
    collapse,
    expectation,
    make_state,
    overlap,
    pauli,
    projectors,
    random_state,
    seq_prob,
    tensor,
)
from pmlab.square import triple_spec

from conftest import rng_from


def kron_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Independent 4x4 Kronecker product by explicit index arithmetic."""
    out = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for m in range(2):
                    out[2 * i + k, 2 * j + m] = a[i, j] * b[k, m]
    return out


class TestMakeState:
    def test_basis_state(self):
        s = make_state((1, 0, 0, 0))
        np.testing.assert_allclose(s.amps, [1, 0, 0, 0])

    def test_singlet_normalization(self):
        s = make_state((0, 1, -1, 0))
        expected = np.array([0, 1, -1, 0]) / np.sqrt(2)
        np.testing.assert_allclose(s.amps, expected)

    def test_scaling_invariance(self):
        np.testing.assert_allclose(make_state((2, 0, 0, 0)).amps, [1, 0, 0, 0])

    def test_zero_vector_rejected(self):
        with pytest.raises(ValidationError):
            make_state((0, 0, 0, 0))

    def test_unnormalized_direct_construction_rejected(self):
        with pytest.raises(ValidationError):
            StateVector(np.array([1.0, 1.0, 0.0, 0.0]))

    def test_amps_are_read_only(self, state_00):
        with pytest.raises(ValueError):
            state_00.amps[0] = 0.5


class TestPauli:
    def test_z(self):
        np.testing.assert_array_equal(pauli("z"), [[1, 0], [0, -1]])

    def test_x(self):
        np.testing.assert_array_equal(pauli("x"), [[0, 1], [1, 0]])

    def test_y(self):
        np.testing.assert_array_equal(pauli("y"), [[0, -1j], [1j, 0]])

    def test_unknown_axis(self):
        with pytest.raises(ValidationError):
            pauli("w")


class TestTensor:
    def test_z_times_identity(self):
        obs = tensor(pauli("z"), ID2)
        np.testing.assert_allclose(obs.matrix, np.diag([1, 1, -1, -1]))

    def test_yy_maps_00_to_minus_11(self):
        obs = tensor(pauli("y"), pauli("y"))
        np.testing.assert_allclose(obs.matrix, kron_oracle(pauli("y"), pauli("y")))
        image = obs.matrix @ np.array([1, 0, 0, 0], dtype=complex)
        np.testing.assert_allclose(image, [0, 0, 0, -1])

    def test_identity_rejected_without_flag(self):
        with pytest.raises(ValidationError):
            tensor(ID2, ID2)
        obs = tensor(ID2, ID2, allow_identity=True)
        np.testing.assert_allclose(obs.matrix, np.eye(4))

    def test_non_involution_rejected(self):
        with pytest.raises(ValidationError):
            tensor(np.array([[1, 0], [0, 2]]), ID2)

    @pytest.mark.parametrize("axes", list(itertools.product("xyz", repeat=2)))
    def test_matches_oracle(self, axes):
        a, b = pauli(axes[0]), pauli(axes[1])
        np.testing.assert_allclose(tensor(a, b).matrix, kron_oracle(a, b))


class TestProjectors:
    def test_zz_plus_projector(self):
        obs = tensor(pauli("z"), pauli("z"))
        plus, _ = projectors(obs)
        # oracle: (I + A)/2 computed by hand for the diagonal ZZ
        np.testing.assert_allclose(plus.matrix, np.diag([1.0, 0.0, 0.0, 1.0]))

    @pytest.mark.parametrize("axes", list(itertools.product("xyz", repeat=2)))
    def test_algebraic_identities(self, axes):
        obs = tensor(pauli(axes[0]), pauli(axes[1]))
        plus, minus = projectors(obs)
        np.testing.assert_allclose(plus.matrix + minus.matrix, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(plus.matrix - minus.matrix, obs.matrix, atol=1e-12)
        np.testing.assert_allclose(plus.matrix @ minus.matrix, np.zeros((4, 4)), atol=1e-12)
        np.testing.assert_allclose(plus.matrix @ plus.matrix, plus.matrix, atol=1e-12)


class TestBorn:
    def test_eigenstate(self, state_00):
        plus, _ = projectors(tensor(pauli("z"), pauli("z")))
        assert born(state_00, plus) == pytest.approx(1.0, abs=1e-12)

    def test_superposition_half(self, state_00):
        # oracle: <00|(I + XX)/2|00> = (1 + <00|XX|00>)/2 = (1 + 0)/2
        plus, _ = projectors(tensor(pauli("x"), pauli("x")))
        assert born(state_00, plus) == pytest.approx(0.5, abs=1e-12)

    def test_singlet_yy_minus(self, singlet):
        _, minus = projectors(tensor(pauli("y"), pauli("y")))
        assert born(singlet, minus) == pytest.approx(1.0, abs=1e-12)

    def test_complement_sums_to_one_fuzz(self):
        gen = rng_from(7)
        obs = [tensor(pauli(a), pauli(b)) for a, b in itertools.product("xyz", repeat=2)]
        for _ in range(1000):
            state = random_state(gen)
            o = obs[int(gen.integers(len(obs)))]
            plus, minus = projectors(o)
            assert born(state, plus) + born(state, minus) == pytest.approx(1.0, abs=1e-12)


class TestCollapse:
    def test_00_collapses_to_bell_state(self, state_00):
        plus, _ = projectors(tensor(pauli("x"), pauli("x")))
        post = collapse(state_00, plus)
        bell = make_state((1, 0, 0, 1))
        assert abs(overlap(post, bell)) ** 2 == pytest.approx(1.0, abs=1e-12)

    def test_eigenstate_unchanged(self, state_00):
        plus, _ = projectors(tensor(pauli("z"), pauli("z")))
        post = collapse(state_00, plus)
        assert abs(overlap(post, state_00)) ** 2 == pytest.approx(1.0, abs=1e-12)

    def test_impossible_branch(self, state_00):
        _, minus = projectors(tensor(pauli("z"), ID2))
        with pytest.raises(ImpossibleBranchError):
            collapse(state_00, minus)

    def test_repeatability_fuzz(self):
        gen = rng_from(11)
        pool = [tensor(pauli(a), pauli(b)) for a, b in itertools.product("xyz", repeat=2)]
        for _ in range(1000):
            state = random_state(gen)
            plus, minus = projectors(pool[int(gen.integers(len(pool)))])
            proj = plus if gen.random() < 0.5 else minus
            if born(state, proj) <= 1e-6:
                continue
            post = collapse(state, proj)
            assert born(post, proj) == pytest.approx(1.0, abs=1e-9)
            again = collapse(post, proj)
            assert abs(overlap(post, again)) ** 2 == pytest.approx(1.0, abs=1e-9)


class TestExpectation:
    def test_eigenstate(self, state_00):
        assert expectation(state_00, tensor(pauli("z"), ID2)) == pytest.approx(1.0)

    def test_balanced_superposition(self, state_00):
        assert expectation(state_00, tensor(pauli("x"), pauli("x"))) == pytest.approx(0.0, abs=1e-12)

    def test_singlet_yy(self, singlet):
        assert expectation(singlet, tensor(pauli("y"), pauli("y"))) == pytest.approx(-1.0)

    def test_real_and_bounded_fuzz(self):
        gen = rng_from(23)
        pool = [tensor(pauli(a), pauli(b)) for a, b in itertools.product("xyz", repeat=2)]
        for _ in range(300):
            state = random_state(gen)
            value = expectation(state, pool[int(gen.integers(len(pool)))])
            assert -1.0 <= value <= 1.0


def _triple_projectors(signs: tuple[int, int, int]):
    spec = triple_spec()
    out = []
    for obs, sign in zip(spec.observables, signs):
        plus, minus = projectors(obs)
        out.append(plus if sign == 1 else minus)
    return out


class TestSeqProb:
    def test_allowed_pattern_half(self, state_00):
        # |<00|Psi(+-+)>|^2 = 1/2 via the eigenstate identities
        assert seq_prob(state_00, _triple_projectors((1, -1, 1))) == pytest.approx(0.5, abs=1e-12)

    def test_forbidden_pattern_zero(self, state_00):
        assert seq_prob(state_00, _triple_projectors((1, 1, 1))) == 0.0

    def test_single_projector_equals_born(self, singlet):
        plus, _ = projectors(tensor(pauli("x"), pauli("x")))
        assert seq_prob(singlet, [plus]) == pytest.approx(born(singlet, plus), abs=1e-15)

    def test_empty_chain_rejected(self, state_00):
        with pytest.raises(ValidationError):
            seq_prob(state_00, [])

    def test_order_invariance_all_six(self):
        gen = rng_from(3)
        for _ in range(50):
            state = random_state(gen)
            signs = tuple(int(s) for s in gen.choice([-1, 1], size=3))
            projs = _triple_projectors(signs)
            values = {
                order: seq_prob(state, [projs[i] for i in order])
                for order in itertools.permutations(range(3))
            }
            reference = values[(0, 1, 2)]
            for value in values.values():
                assert value == pytest.approx(reference, abs=1e-12)

    def test_commuting_chain_equals_operator_product(self):
        gen = rng_from(5)
        for _ in range(50):
            state = random_state(gen)
            signs = tuple(int(s) for s in gen.choice([-1, 1], size=3))
            projs = _triple_projectors(signs)
            chain = seq_prob(state, projs)
            product = projs[0].matrix @ projs[1].matrix @ projs[2].matrix
            direct = float(np.vdot(state.amps, product @ state.amps).real)
            assert chain == pytest.approx(direct, abs=1e-12)

    def test_eight_patterns_sum_to_one(self):
        gen = rng_from(9)
        for _ in range(50):
            state = random_state(gen)
            total = sum(
                seq_prob(state, _triple_projectors(signs))
                for signs in itertools.product((1, -1), repeat=3)
            )
            assert total == pytest.approx(1.0, abs=1e-9)


class TestOutcomeDistribution:
    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValidationError):
            OutcomeDistribution({(1,): 0.7, (-1,): 0.7})
        with pytest.raises(ValidationError):
            OutcomeDistribution({(1,): 1.2, (-1,): -0.2})
        with pytest.raises(ValidationError):
            OutcomeDistribution({(1, 1): 0.5, (-1,): 0.5})

    def test_prob_and_support(self):
        dist = OutcomeDistribution({(1,): 1.0, (-1,): 0.0})
        assert dist.prob((1,)) == 1.0
        assert dist.support() == ((1,),)


amplitude = st.tuples(
    st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False)
).map(lambda t: complex(*t))


@settings(max_examples=60, deadline=None)
@given(st.tuples(amplitude, amplitude, amplitude, amplitude))
def test_make_state_always_normalized(amps):
    if sum(abs(a) for a in amps) < 1e-6:
        return
    state = make_state(amps)
    assert np.sum(np.abs(state.amps) ** 2) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.tuples(amplitude, amplitude, amplitude, amplitude), st.sampled_from("xyz"), st.sampled_from("xyz"))
def test_born_probabilities_partition_unity(amps, left, right):
    if sum(abs(a) for a in amps) < 1e-6:
        return
    state = make_state(amps)
    plus, minus = projectors(tensor(pauli(left), pauli(right)))
    p, q = born(state, plus), born(state, minus)
    assert 0.0 <= p <= 1.0
    assert p + q == pytest.approx(1.0, abs=1e-12)
