"""The three hidden-variable model engines.

Model A (synchronic triple): four hidden-state types, one per common
eigenvector of the triple; measurements never change the hidden state, only
the ensemble distribution conditions.

Model B (product triple): eight types weighted by the product of single-cell
Born marginals; after each measurement the hidden state jumps, resampled from
the product measure of the collapsed state.

Model C (full square): 512 types over the nine grid cells, same product
measure and stochastic jump; the quantum state rides along in the hidden
state (the model is psi-ontic) because it drives the jump probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ImpossibleBranchError, ValidationError
from .qcore import ATOL_PROB, MIN_BRANCH_PROB, StateVector, born, collapse, overlap
from .square import (
    GRID_CELLS,
    TRIPLE_CELLS,
    Cell,
    Context,
    GridIndex,
    observable_for_cell,
    projector_for_cell,
    triple_spec,
)


class ModelKind(Enum):
    """Which hidden-variable engine drives outcomes and jumps."""

    SYNCHRONIC_TRIPLE = "a"   # 4 types, no hidden-state jump
    PRODUCT_TRIPLE = "b"      # 8 types, stochastic jump
    PM_SQUARE = "c"           # 512 types, stochastic jump, psi-ontic

    @classmethod
    def from_text(cls, text: str) -> "ModelKind":
        for kind in cls:
            if kind.value == text.lower():
                return kind
        raise ValidationError(f"unknown model kind {text!r}; expected a, b or c")


@dataclass(frozen=True)
class EpsilonAssignment:
    """One ±1 value per measurement site; arity 3 (triple) or 9 (square).

    Canonical integer encoding: bit k is set iff ``signs[k]`` is +1, where a
    grid cell occupies bit (row-1)*3 + (col-1).  Arity 9 therefore maps onto
    the integers 0..511.
    """

    signs: tuple[int, ...]

    def __post_init__(self) -> None:
        signs = tuple(int(s) for s in self.signs)
        if len(signs) not in (3, 9):
            raise ValidationError(f"assignment arity must be 3 or 9, got {len(signs)}")
        if any(s not in (1, -1) for s in signs):
            raise ValidationError("assignment entries must be +1 or -1")
        object.__setattr__(self, "signs", signs)

    @property
    def arity(self) -> int:
        return len(self.signs)

    @property
    def code(self) -> int:
        value = 0
        for k, s in enumerate(self.signs):
            if s == 1:
                value |= 1 << k
        return value

    @classmethod
    def from_code(cls, code: int, arity: int) -> "EpsilonAssignment":
        if not 0 <= code < (1 << arity):
            raise ValidationError(f"code {code} out of range for arity {arity}")
        return cls(tuple(1 if (code >> k) & 1 else -1 for k in range(arity)))

    @classmethod
    def from_string(cls, text: str) -> "EpsilonAssignment":
        if any(ch not in "+-" for ch in text):
            raise ValidationError(f"assignment string {text!r} must use only + and -")
        return cls(tuple(1 if ch == "+" else -1 for ch in text))

    def sign_at(self, cell: Cell) -> int:
        return self.signs[_cell_position(cell, self.arity)]

    def __str__(self) -> str:
        return "".join("+" if s == 1 else "-" for s in self.signs)


@dataclass(frozen=True, eq=False)
class HiddenState:
    """A single hidden state: the value assignment plus the quantum state."""

    eps: EpsilonAssignment
    psi: StateVector


@dataclass(frozen=True, eq=False)
class HiddenDistribution:
    """Probability per hidden-state type, aligned with ``support(kind)``."""

    kind: ModelKind
    psi: StateVector
    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.probs, dtype=float)
        expected = len(support(self.kind))
        if arr.shape != (expected,):
            raise ValidationError(
                f"model {self.kind.value} needs {expected} probabilities, got {arr.shape}"
            )
        if float(arr.min(initial=0.0)) < -ATOL_PROB:
            raise ValidationError("hidden-state probabilities must be nonnegative")
        total = float(arr.sum())
        if abs(total - 1.0) > ATOL_PROB:
            raise ValidationError(f"hidden-state probabilities sum to {total!r}, not 1")
        arr = np.clip(arr, 0.0, None)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)


def _cell_position(cell: Cell, arity: int) -> int:
    if isinstance(cell, GridIndex):
        if arity != 9:
            raise ValidationError(f"grid cell {cell} is invalid for a triple model")
        return cell.flat
    if isinstance(cell, bool) or not isinstance(cell, int):
        raise ValidationError(f"invalid cell {cell!r}")
    if arity != 3:
        raise ValidationError(f"triple position {cell} is invalid for the square model")
    if cell not in TRIPLE_CELLS:
        raise ValidationError(f"triple position must be 1..3, got {cell}")
    return cell - 1


def model_arity(kind: ModelKind) -> int:
    return 9 if kind is ModelKind.PM_SQUARE else 3


def model_cells(kind: ModelKind) -> tuple[Cell, ...]:
    """The measurement sites a model assigns values to, in canonical order."""
    if kind is ModelKind.PM_SQUARE:
        return GRID_CELLS
    return TRIPLE_CELLS


@lru_cache(maxsize=None)
def support(kind: ModelKind) -> tuple[EpsilonAssignment, ...]:
    """Hidden-state types of a model, in canonical order.

    Model A lists the four tabulated eigenvalue patterns (table order);
    Models B and C list all sign patterns in ascending code order.
    """
    if kind is ModelKind.SYNCHRONIC_TRIPLE:
        return tuple(EpsilonAssignment(vals) for vals in triple_spec().eigenvalues)
    arity = model_arity(kind)
    return tuple(EpsilonAssignment.from_code(code, arity) for code in range(1 << arity))


@lru_cache(maxsize=None)
def _support_signs(kind: ModelKind) -> np.ndarray:
    arr = np.array([eps.signs for eps in support(kind)], dtype=np.int8)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _plus_projectors_flat(kind: ModelKind) -> np.ndarray:
    # (4, 4*sites) with block k holding the transpose of site k's P+, so that
    # psis @ flat yields every projected vector in one matrix product.
    mats = [projector_for_cell(c, 1).matrix.T for c in model_cells(kind)]
    flat = np.ascontiguousarray(np.hstack(mats))
    flat.setflags(write=False)
    return flat


def plus_marginals(kind: ModelKind, psi: StateVector) -> np.ndarray:
    """Born probability of the +1 outcome at every site of the model."""
    return plus_marginals_rows(kind, psi.amps[np.newaxis, :])[0]


def plus_marginals_rows(kind: ModelKind, psis: np.ndarray) -> np.ndarray:
    """Vectorized +1 Born marginals for a batch of state rows, shape (N, sites).

    Uses <psi|P|psi> = |P psi|^2.  Scalar and batch trajectory code share this
    one formula so that identical random streams yield identical outcomes.
    """
    projected = psis @ _plus_projectors_flat(kind)
    mags = (projected.real**2 + projected.imag**2).reshape(len(psis), -1, 4)
    return np.clip(mags.sum(axis=2), 0.0, 1.0)


def _bell_overlap_probs(psi: StateVector) -> np.ndarray:
    spec = triple_spec()
    return np.array([abs(overlap(psi, vec)) ** 2 for vec in spec.eigenvectors])


def _product_probs(kind: ModelKind, psi: StateVector) -> np.ndarray:
    # p(eps) = prod over sites of <psi|P^(eps at site)|psi>, per Born marginal.
    plus = np.array(
        [born(psi, projector_for_cell(c, 1)) for c in model_cells(kind)]
    )
    minus = np.array(
        [born(psi, projector_for_cell(c, -1)) for c in model_cells(kind)]
    )
    arity = model_arity(kind)
    codes = np.arange(1 << arity)
    probs = np.ones(1 << arity)
    for k in range(arity):
        bit = (codes >> k) & 1
        probs *= np.where(bit, plus[k], minus[k])
    return probs


def init_distribution(kind: ModelKind, state: StateVector) -> HiddenDistribution:
    """Hidden-state distribution prepared by a quantum state.

    Model A weights the four eigenvalue patterns by squared overlap with the
    corresponding Bell vector; Models B and C use the product of single-site
    Born marginals.
    """
    if kind is ModelKind.SYNCHRONIC_TRIPLE:
        probs = _bell_overlap_probs(state)
    else:
        probs = _product_probs(kind, state)
    return HiddenDistribution(kind=kind, psi=state, probs=probs)


def marginal(dist: HiddenDistribution, cell: Cell, sign: int) -> float:
    """Total probability of hidden states assigning ``sign`` at ``cell``."""
    if sign not in (1, -1):
        raise ValidationError(f"sign must be +1 or -1, got {sign!r}")
    pos = _cell_position(cell, model_arity(dist.kind))
    mask = _support_signs(dist.kind)[:, pos] == sign
    return float(dist.probs[mask].sum())


def sample_hidden(dist: HiddenDistribution, rng: np.random.Generator) -> HiddenState:
    """Draw one hidden state from the distribution (one uniform consumed)."""
    cumulative = np.cumsum(dist.probs)
    idx = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    idx = min(idx, len(dist.probs) - 1)
    return HiddenState(eps=support(dist.kind)[idx], psi=dist.psi)


def draw_initial_assignment(
    kind: ModelKind, psi: StateVector, rng: np.random.Generator
) -> EpsilonAssignment:
    """Sample the hidden assignment prepared by ``psi``.

    Consumes one uniform for Model A (categorical over the four types) and one
    uniform per site for Models B and C (the product measure factorizes).
    This fixed draw protocol is what makes batch and single-trajectory
    execution reproduce each other stream-for-stream.
    """
    if kind is ModelKind.SYNCHRONIC_TRIPLE:
        return sample_hidden(init_distribution(kind, psi), rng).eps
    return draw_product_assignment(kind, psi, rng)


def draw_product_assignment(
    kind: ModelKind, psi: StateVector, rng: np.random.Generator
) -> EpsilonAssignment:
    """Sample from the product measure of ``psi``: one uniform per site."""
    if kind is ModelKind.SYNCHRONIC_TRIPLE:
        raise ValidationError("model a has no product measure")
    plus = plus_marginals(kind, psi)
    u = rng.random(len(plus))
    return EpsilonAssignment(tuple(1 if ui < pi else -1 for ui, pi in zip(u, plus)))


def outcome_of(hidden: HiddenState, cell: Cell) -> int:
    """The definite outcome at ``cell``: a pure readout of the assignment.

    Depends on (hidden state, cell) only -- never on which other measurements
    are or could be performed.
    """
    return hidden.eps.sign_at(cell)


def would_be_joint(
    hidden: HiddenState, context: Context | Sequence[Cell]
) -> tuple[int, ...]:
    """Counterfactual joint outcome over a context: per-cell readouts.

    The joint measurement cannot actually be performed under the sequential
    regime; this reports what its outcome would be in the given hidden state.
    """
    cells = context.members if isinstance(context, Context) else tuple(context)
    return tuple(outcome_of(hidden, c) for c in cells)


def update_after_measurement(
    kind: ModelKind,
    target: HiddenDistribution | HiddenState,
    cell: Cell,
    observed_sign: int,
    rng: np.random.Generator | None = None,
):
    """Measurement update: collapse the quantum state, then move the hidden part.

    Ensemble form (``target`` is a distribution): Model A conditions on the
    assignments consistent with the observed sign and renormalizes; Models B
    and C replace the distribution with the product measure of the collapsed
    state.

    Trajectory form (``target`` is a hidden state): Model A keeps the
    assignment; Models B and C resample it from the product measure of the
    collapsed state (``rng`` required), independently of the old assignment.
    """
    if observed_sign not in (1, -1):
        raise ValidationError(f"sign must be +1 or -1, got {observed_sign!r}")
    _cell_position(cell, model_arity(kind))  # validates the cell/model pairing
    proj = projector_for_cell(cell, observed_sign)

    if isinstance(target, HiddenDistribution):
        if target.kind is not kind:
            raise ValidationError("distribution belongs to a different model kind")
        psi_new = collapse(target.psi, proj)
        if kind is ModelKind.SYNCHRONIC_TRIPLE:
            pos = _cell_position(cell, 3)
            mask = _support_signs(kind)[:, pos] == observed_sign
            kept = np.where(mask, target.probs, 0.0)
            total = float(kept.sum())
            if total <= MIN_BRANCH_PROB:  # empty conditioning, not renormalizable
                raise ImpossibleBranchError(
                    f"no hidden states consistent with sign {observed_sign:+d} at {cell}"
                )
            return HiddenDistribution(kind=kind, psi=psi_new, probs=kept / total)
        return init_distribution(kind, psi_new)

    if isinstance(target, HiddenState):
        psi_new = collapse(target.psi, proj)
        if kind is ModelKind.SYNCHRONIC_TRIPLE:
            return HiddenState(eps=target.eps, psi=psi_new)
        if rng is None:
            raise ValidationError("trajectory updates for models b/c need an rng")
        return HiddenState(eps=draw_product_assignment(kind, psi_new, rng), psi=psi_new)

    raise ValidationError(f"cannot update {type(target).__name__}")
