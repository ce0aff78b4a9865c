"""Exact two-qubit quantum mechanics: states, ±1 observables, Born rule,
projective collapse, and sequential chain probabilities.

Everything here is closed-form 4x4 linear algebra.  Each observable is a
Hermitian involution (A^2 = I), so its eigenprojections are (I ± A)/2 and no
numerical eigensolver is ever needed.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ImpossibleBranchError, ValidationError

#: Tolerance for structural operator identities (Hermiticity, involution, ...).
ATOL_STRUCT = 1e-12
#: Tolerance for probability normalization and statistical identities.
ATOL_PROB = 1e-9
#: Below this Born probability an outcome branch counts as impossible.
MIN_BRANCH_PROB = 1e-12

#: 2x2 identity, the fourth single-qubit factor next to the three Paulis.
ID2 = np.eye(2, dtype=complex)

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(axis: str) -> np.ndarray:
    """Return the standard 2x2 Pauli matrix for axis ``x``, ``y`` or ``z``."""
    try:
        return _PAULI[axis].copy()
    except KeyError:
        raise ValidationError(f"unknown Pauli axis {axis!r}; expected x, y or z") from None


def _frozen_array(values: object, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    if arr.shape != shape:
        raise ValidationError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized two-qubit state, amplitudes in basis order |00>,|01>,|10>,|11>.

    States are never compared by amplitude equality (global phase is not
    fixed); use :func:`overlap` and compare |<a|b>|^2 instead.
    """

    amps: np.ndarray

    def __post_init__(self) -> None:
        arr = _frozen_array(self.amps, (4,))
        norm_sq = float(np.sum(np.abs(arr) ** 2))
        if abs(norm_sq - 1.0) > ATOL_PROB:
            raise ValidationError(
                f"state norm^2 = {norm_sq!r} is not 1 within {ATOL_PROB}; use make_state()"
            )
        object.__setattr__(self, "amps", arr)

    def __repr__(self) -> str:
        parts = ", ".join(f"{a:.6g}" for a in self.amps)
        return f"StateVector([{parts}])"


@dataclass(frozen=True, eq=False)
class Observable:
    """4x4 Hermitian involution with eigenvalues ±1.

    All nine grid operators are traceless; the identity (nonzero trace) is
    accepted only when constructed with ``traceless=False``.
    """

    matrix: np.ndarray
    label: str | None = None
    traceless: InitVar[bool] = True

    def __post_init__(self, traceless: bool) -> None:
        mat = _frozen_array(self.matrix, (4, 4))
        if not np.allclose(mat, mat.conj().T, rtol=0.0, atol=ATOL_STRUCT):
            raise ValidationError("observable must be Hermitian")
        if not np.allclose(mat @ mat, np.eye(4), rtol=0.0, atol=ATOL_STRUCT):
            raise ValidationError("observable must be an involution (A @ A = I)")
        if traceless and abs(np.trace(mat)) > ATOL_STRUCT:
            raise ValidationError(
                "observable has nonzero trace; pass traceless=False for the identity"
            )
        object.__setattr__(self, "matrix", mat)

    def __repr__(self) -> str:
        return f"Observable({self.label or 'unlabeled'})"


@dataclass(frozen=True, eq=False)
class Projector:
    """Eigenprojection of an observable onto the ``sign`` eigenvalue."""

    matrix: np.ndarray
    sign: int

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise ValidationError(f"projector sign must be +1 or -1, got {self.sign!r}")
        mat = _frozen_array(self.matrix, (4, 4))
        if not np.allclose(mat, mat.conj().T, rtol=0.0, atol=ATOL_STRUCT):
            raise ValidationError("projector must be Hermitian")
        if not np.allclose(mat @ mat, mat, rtol=0.0, atol=ATOL_STRUCT):
            raise ValidationError("projector must be idempotent")
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Probability per outcome sequence (tuples of ±1, one entry per step)."""

    probs: Mapping[tuple[int, ...], float]

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValidationError("outcome distribution must not be empty")
        lengths = {len(seq) for seq in self.probs}
        if len(lengths) != 1:
            raise ValidationError("all outcome sequences must have the same length")
        clean: dict[tuple[int, ...], float] = {}
        for seq in sorted(self.probs):
            if any(s not in (1, -1) for s in seq):
                raise ValidationError(f"outcome sequence {seq!r} contains non-±1 entries")
            p = float(self.probs[seq])
            if p < -ATOL_PROB or p > 1.0 + ATOL_PROB:
                raise ValidationError(f"probability {p!r} for {seq!r} is outside [0, 1]")
            clean[tuple(int(s) for s in seq)] = min(max(p, 0.0), 1.0)
        total = sum(clean.values())
        if abs(total - 1.0) > ATOL_PROB:
            raise ValidationError(f"probabilities sum to {total!r}, not 1 within {ATOL_PROB}")
        object.__setattr__(self, "probs", clean)

    @property
    def sequence_length(self) -> int:
        return len(next(iter(self.probs)))

    def prob(self, sequence: Iterable[int]) -> float:
        return self.probs.get(tuple(int(s) for s in sequence), 0.0)

    def support(self) -> tuple[tuple[int, ...], ...]:
        """Outcome sequences with probability above the branch threshold."""
        return tuple(seq for seq, p in self.probs.items() if p > MIN_BRANCH_PROB)

    def items(self):
        return self.probs.items()


def make_state(amps: Sequence[complex]) -> StateVector:
    """Build a normalized state from any nonzero 4-component amplitude vector."""
    arr = np.array(amps, dtype=complex)
    if arr.shape != (4,):
        raise ValidationError(f"expected 4 amplitudes, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr))
    if norm <= 0.0:
        raise ValidationError("cannot normalize the zero vector")
    return StateVector(arr / norm)


def random_state(rng: np.random.Generator) -> StateVector:
    """Haar-like random state: normalized standard complex Gaussian amplitudes."""
    raw = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    return make_state(raw)


def overlap(a: StateVector, b: StateVector) -> complex:
    """Inner product <a|b>."""
    return complex(np.vdot(a.amps, b.amps))


def tensor(a: np.ndarray, b: np.ndarray, label: str | None = None,
           allow_identity: bool = False) -> Observable:
    """Kronecker product of two single-qubit Hermitian involutions.

    ``allow_identity`` admits the trace-4 result I⊗I (internal use only);
    every grid operator is traceless and rejected otherwise.
    """
    for name, mat in (("a", a), ("b", b)):
        arr = np.asarray(mat, dtype=complex)
        if arr.shape != (2, 2):
            raise ValidationError(f"factor {name} must be 2x2, got {arr.shape}")
        if not np.allclose(arr, arr.conj().T, rtol=0.0, atol=ATOL_STRUCT):
            raise ValidationError(f"factor {name} must be Hermitian")
        if not np.allclose(arr @ arr, np.eye(2), rtol=0.0, atol=ATOL_STRUCT):
            raise ValidationError(f"factor {name} must be an involution")
    return Observable(np.kron(a, b), label=label, traceless=not allow_identity)


def projectors(obs: Observable) -> tuple[Projector, Projector]:
    """Eigenprojections (P+, P-) = ((I + A)/2, (I - A)/2), exact closed form."""
    eye = np.eye(4, dtype=complex)
    plus = Projector((eye + obs.matrix) / 2.0, sign=1)
    minus = Projector((eye - obs.matrix) / 2.0, sign=-1)
    return plus, minus


def born(state: StateVector, proj: Projector) -> float:
    """Probability <psi|P|psi> of the projector's outcome, clamped to [0, 1]."""
    value = float(np.vdot(state.amps, proj.matrix @ state.amps).real)
    return min(max(value, 0.0), 1.0)


def collapse(state: StateVector, proj: Projector) -> StateVector:
    """Post-measurement state P|psi> / <psi|P|psi>^(1/2).

    Raises :class:`ImpossibleBranchError` when the branch probability is at or
    below ``MIN_BRANCH_PROB``.
    """
    if born(state, proj) <= MIN_BRANCH_PROB:
        raise ImpossibleBranchError(
            f"cannot collapse onto sign {proj.sign:+d}: branch probability is zero"
        )
    projected = proj.matrix @ state.amps
    return StateVector(projected / np.linalg.norm(projected))


def expectation(state: StateVector, obs: Observable) -> float:
    """Expectation value <psi|A|psi>, real and clamped to [-1, 1]."""
    value = float(np.vdot(state.amps, obs.matrix @ state.amps).real)
    return min(max(value, -1.0), 1.0)


def seq_prob(state: StateVector, projs: Sequence[Projector]) -> float:
    """Probability of observing the given projector chain sequentially.

    Computed as the operational chain product p1 * p2 * ... with collapse
    between steps.  Defined for commuting and noncommuting chains alike; for
    commuting projectors it equals <psi|P1 P2 P3|psi>.  A zero-probability
    prefix yields 0 without collapsing further.
    """
    if not projs:
        raise ValidationError("projector sequence must not be empty")
    total = 1.0
    psi = state
    for proj in projs:
        p = born(psi, proj)
        if p <= MIN_BRANCH_PROB:
            return 0.0
        total *= p
        psi = collapse(psi, proj)
    return total
