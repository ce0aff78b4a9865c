"""The Peres-Mermin operator grid, its row/column contexts, the three-operator
commuting triple with its Bell eigenbasis, and the exact Cabello functional.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

import numpy as np

from .errors import ConsistencyError, ValidationError
from .qcore import (
    ATOL_STRUCT,
    ID2,
    Observable,
    Projector,
    StateVector,
    make_state,
    pauli,
    projectors,
    tensor,
)

# Single-qubit factors per grid cell, row-major.  "i" is the identity.
_GRID_FACTORS: dict[tuple[int, int], tuple[str, str]] = {
    (1, 1): ("z", "i"),
    (1, 2): ("i", "z"),
    (1, 3): ("z", "z"),
    (2, 1): ("i", "x"),
    (2, 2): ("x", "i"),
    (2, 3): ("x", "x"),
    (3, 1): ("z", "x"),
    (3, 2): ("x", "z"),
    (3, 3): ("y", "y"),
}


@dataclass(frozen=True)
class GridIndex:
    """Cell address (row, col), both in 1..3."""

    row: int
    col: int

    def __post_init__(self) -> None:
        if self.row not in (1, 2, 3) or self.col not in (1, 2, 3):
            raise ValidationError(f"grid index out of bounds: ({self.row}, {self.col})")

    @property
    def flat(self) -> int:
        """Row-major position 0..8; also the bit position in encoded assignments."""
        return (self.row - 1) * 3 + (self.col - 1)

    def __str__(self) -> str:
        return f"{self.row},{self.col}"


#: All nine cells in row-major order.
GRID_CELLS: tuple[GridIndex, ...] = tuple(
    GridIndex(r, c) for r in (1, 2, 3) for c in (1, 2, 3)
)

#: A measurement site: a grid cell, or a position 1..3 in the commuting triple.
Cell = Union[GridIndex, int]

#: Triple positions, in the fixed order (XX, YY, ZZ).
TRIPLE_CELLS: tuple[int, int, int] = (1, 2, 3)


def _factor(ch: str) -> np.ndarray:
    return ID2 if ch == "i" else pauli(ch)


def commutator_norm(a: Observable, b: Observable) -> float:
    """Frobenius norm of [A, B]; zero (within tolerance) iff A and B commute."""
    comm = a.matrix @ b.matrix - b.matrix @ a.matrix
    return float(np.linalg.norm(comm))


@dataclass(frozen=True, eq=False)
class PMSquare:
    """The 3x3 grid of two-qubit observables.

    Entries are pinned to the canonical grid (ZI IZ ZZ / IX XI XX / ZX XZ YY)
    and the commutation pattern -- commuting iff same row or same column -- is
    verified numerically on construction.
    """

    cells: Mapping[GridIndex, Observable]

    def __post_init__(self) -> None:
        entries = dict(self.cells)
        if set(entries) != set(GRID_CELLS):
            raise ValidationError("square must define exactly the nine grid cells")
        for idx in GRID_CELLS:
            left, right = _GRID_FACTORS[(idx.row, idx.col)]
            expected = np.kron(_factor(left), _factor(right))
            if not np.allclose(entries[idx].matrix, expected, rtol=0.0, atol=ATOL_STRUCT):
                raise ValidationError(f"cell {idx} does not match the canonical operator")
        for a in GRID_CELLS:
            for b in GRID_CELLS:
                if a.flat >= b.flat:
                    continue
                should_commute = a.row == b.row or a.col == b.col
                commutes = commutator_norm(entries[a], entries[b]) <= ATOL_STRUCT
                if commutes != should_commute:
                    raise ValidationError(
                        f"commutation pattern violated for cells {a} and {b}"
                    )
        object.__setattr__(self, "cells", entries)

    def observable(self, idx: GridIndex) -> Observable:
        return self.cells[idx]


@dataclass(frozen=True, eq=False)
class Context:
    """One row or column: three mutually commuting cells whose operator
    product equals sign * identity."""

    kind: str  # "row" | "col"
    index: int
    members: tuple[GridIndex, GridIndex, GridIndex]
    sign: int

    @property
    def label(self) -> str:
        return f"{'r' if self.kind == 'row' else 'c'}{self.index}"


@dataclass(frozen=True, eq=False)
class TripleSpec:
    """The commuting triple (XX, YY, ZZ) with its common Bell eigenbasis.

    ``eigenvalues[k]`` lists the (A1, A2, A3) eigenvalue signs of
    ``eigenvectors[k]``; ``names[k]`` is the sign pattern as a string.
    """

    observables: tuple[Observable, Observable, Observable]
    eigenvectors: tuple[StateVector, StateVector, StateVector, StateVector]
    eigenvalues: tuple[tuple[int, int, int], ...]
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        for vec, vals in zip(self.eigenvectors, self.eigenvalues):
            for obs, val in zip(self.observables, vals):
                image = obs.matrix @ vec.amps
                if not np.allclose(image, val * vec.amps, rtol=0.0, atol=ATOL_STRUCT):
                    raise ConsistencyError(
                        f"listed vector is not an eigenvector of {obs.label} "
                        f"with eigenvalue {val:+d}"
                    )


@lru_cache(maxsize=1)
def build_square() -> PMSquare:
    """Construct the canonical grid; all PMSquare invariants are re-verified."""
    cells = {}
    for idx in GRID_CELLS:
        left, right = _GRID_FACTORS[(idx.row, idx.col)]
        cells[idx] = tensor(_factor(left), _factor(right), label=(left + right).upper())
    return PMSquare(cells)


def contexts(square: PMSquare) -> list[Context]:
    """The six contexts: rows 1..3 then columns 1..3, each with verified sign.

    The operator product over members (grid order) must equal sign * identity;
    a mismatch raises :class:`ConsistencyError`.
    """
    out: list[Context] = []
    for kind, index_of in (("row", lambda k, i: GridIndex(k, i)),
                           ("col", lambda k, i: GridIndex(i, k))):
        for k in (1, 2, 3):
            members = tuple(index_of(k, i) for i in (1, 2, 3))
            product = np.eye(4, dtype=complex)
            for idx in members:
                product = product @ square.observable(idx).matrix
            sign = 0
            for candidate in (1, -1):
                if np.allclose(product, candidate * np.eye(4), rtol=0.0, atol=ATOL_STRUCT):
                    sign = candidate
            if sign == 0:
                raise ConsistencyError(
                    f"context {kind}{k} product is not ±identity"
                )
            out.append(Context(kind=kind, index=k, members=members, sign=sign))
    return out


@lru_cache(maxsize=1)
def grid_contexts() -> tuple[Context, ...]:
    """Cached contexts of the canonical square."""
    return tuple(contexts(build_square()))


@lru_cache(maxsize=1)
def _cabello_terms() -> tuple[tuple[str, np.ndarray, int], ...]:
    # (label, product matrix, coefficient); column 3 enters with a minus sign.
    terms = []
    for ctx in grid_contexts():
        square = build_square()
        product = np.eye(4, dtype=complex)
        for idx in ctx.members:
            product = product @ square.observable(idx).matrix
        coeff = -1 if (ctx.kind == "col" and ctx.index == 3) else 1
        terms.append((ctx.label, product, coeff))
    return tuple(terms)


def cabello_value_exact(state: StateVector) -> float:
    """Exact value of the six-term correlation functional.

    Sum of <A_i1 A_i2 A_i3> over rows plus <A_1j A_2j A_3j> over columns 1, 2
    minus the column-3 term, each evaluated as the expectation of the 4x4
    operator product.  Quantum mechanics yields 6 for every state.
    """
    total = 0.0
    for _, product, coeff in _cabello_terms():
        value = float(np.vdot(state.amps, product @ state.amps).real)
        total += coeff * value
    return total


@lru_cache(maxsize=1)
def triple_spec() -> TripleSpec:
    """The three-operator triple and its tabulated Bell eigenbasis."""
    observables = (
        tensor(pauli("x"), pauli("x"), label="XX"),
        tensor(pauli("y"), pauli("y"), label="YY"),
        tensor(pauli("z"), pauli("z"), label="ZZ"),
    )
    s = 1.0 / np.sqrt(2.0)
    eigenvectors = (
        make_state((s, 0, 0, s)),    # (|00> + |11>)/sqrt(2)
        make_state((s, 0, 0, -s)),   # (|00> - |11>)/sqrt(2)
        make_state((0, s, s, 0)),    # (|01> + |10>)/sqrt(2)
        make_state((0, s, -s, 0)),   # (|01> - |10>)/sqrt(2), the singlet
    )
    eigenvalues = ((1, -1, 1), (-1, 1, 1), (1, 1, -1), (-1, -1, -1))
    names = ("+-+", "-++", "++-", "---")
    return TripleSpec(observables, eigenvectors, eigenvalues, names)


def observable_for_cell(cell: Cell) -> Observable:
    """Resolve a measurement site to its observable.

    Integers 1..3 address the commuting triple (XX, YY, ZZ); a
    :class:`GridIndex` addresses the square.
    """
    if isinstance(cell, GridIndex):
        return build_square().observable(cell)
    if isinstance(cell, bool) or not isinstance(cell, int):
        raise ValidationError(f"invalid cell {cell!r}")
    if cell not in TRIPLE_CELLS:
        raise ValidationError(f"triple position must be 1..3, got {cell}")
    return triple_spec().observables[cell - 1]


@lru_cache(maxsize=32)
def projector_for_cell(cell: Cell, sign: int) -> Projector:
    """Cached eigenprojection for a measurement site and outcome sign."""
    if sign not in (1, -1):
        raise ValidationError(f"sign must be +1 or -1, got {sign!r}")
    plus, minus = projectors(observable_for_cell(cell))
    return plus if sign == 1 else minus
