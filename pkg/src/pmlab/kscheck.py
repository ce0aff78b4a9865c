"""Brute-force analysis of static (non-updating) value assignments.

Enumerates all 512 sign assignments over the grid, maximizes the six-term
functional (the static bound is 4, strictly below the quantum value 6) and
certifies that no assignment satisfies all six context sign constraints.

Everything here is integer arithmetic; the full enumeration is kept (rather
than the parity shortcut) so the report doubles as a certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .errors import ValidationError
from .hvmodels import EpsilonAssignment
from .square import grid_contexts


def _constraints() -> tuple[tuple[str, tuple[int, int, int], int], ...]:
    # (label, member bit positions, required product sign) per context.
    return tuple(
        (ctx.label, tuple(c.flat for c in ctx.members), ctx.sign)
        for ctx in grid_contexts()
    )


def enumerate_valuations() -> Iterator[EpsilonAssignment]:
    """All 2^9 grid assignments, exactly once, in ascending code order."""
    for code in range(512):
        yield EpsilonAssignment.from_code(code, 9)


def cabello_functional(valuation: EpsilonAssignment) -> int:
    """Sum of the six signed triple products under a fixed assignment.

    Rows and columns 1, 2 enter with +, column 3 with -.  The result lies in
    {-6, ..., 6} and shares the parity class of 6.
    """
    if valuation.arity != 9:
        raise ValidationError("the functional is defined for arity-9 assignments")
    total = 0
    for label, members, _ in _constraints():
        product = 1
        for pos in members:
            product *= valuation.signs[pos]
        total += -product if label == "c3" else product
    return total


@dataclass(frozen=True, eq=False)
class KSReport:
    """Certificate of the exhaustive search over static assignments."""

    max_functional: int
    maximizers: tuple[EpsilonAssignment, ...]
    exists_satisfying_all: bool
    max_constraints_satisfied: int
    satisfied_per_valuation: tuple[int, ...]  # aligned with ascending code order

    def __post_init__(self) -> None:
        if self.max_functional > 6:
            raise ValidationError("functional values cannot exceed 6")
        if self.exists_satisfying_all != (6 in self.satisfied_per_valuation):
            raise ValidationError("satisfiability flag contradicts the counts")

    @property
    def maximizer_count(self) -> int:
        return len(self.maximizers)


def ks_contradiction_check() -> KSReport:
    """Exhaust the 512 assignments against the six context sign constraints.

    No assignment can satisfy all six (the product of the six required signs
    is -1 while every assignment's six triple products multiply to +1, each
    cell appearing twice); the best achievable is 5.
    """
    constraints = _constraints()
    best = -7
    maximizers: list[EpsilonAssignment] = []
    satisfied_counts: list[int] = []
    for valuation in enumerate_valuations():
        value = cabello_functional(valuation)
        if value > best:
            best = value
            maximizers = [valuation]
        elif value == best:
            maximizers.append(valuation)
        satisfied = 0
        for _, members, sign in constraints:
            product = 1
            for pos in members:
                product *= valuation.signs[pos]
            if product == sign:
                satisfied += 1
        satisfied_counts.append(satisfied)
    return KSReport(
        max_functional=best,
        maximizers=tuple(maximizers),
        exists_satisfying_all=6 in satisfied_counts,
        max_constraints_satisfied=max(satisfied_counts),
        satisfied_per_valuation=tuple(satisfied_counts),
    )
