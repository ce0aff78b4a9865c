"""Sequential-measurement experiment runner.

Executes measurement plans against the exact quantum backend or one of the
hidden-variable models, collects outcome statistics, compares them with the
exact sequential predictions, and estimates the six-term correlation
functional from sequential data.

Reproducibility contract: trial ``k`` of a plan owns a fixed slice of a
counter-based Philox stream keyed by the plan seed, so serial, chunked and
parallel execution see identical random numbers.  ``run_trajectory`` with
``trial_rng(plan, k)`` reproduces row ``k`` of any batched run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ImpossibleBranchError, ValidationError
from .hvmodels import (
    EpsilonAssignment,
    HiddenState,
    ModelKind,
    _bell_overlap_probs,
    draw_initial_assignment,
    init_distribution,
    marginal,
    model_arity,
    model_cells,
    outcome_of,
    plus_marginals_rows,
    support,
    update_after_measurement,
)
from .qcore import (
    MIN_BRANCH_PROB,
    OutcomeDistribution,
    StateVector,
    born,
    collapse,
)
from .square import Cell, GridIndex, grid_contexts, projector_for_cell

#: Backend tag for the plain quantum-mechanics engine.
QM = "qm"

Backend = Union[str, ModelKind]

_CHUNK = 1 << 15


def normalize_backend(value: Backend) -> Backend:
    if isinstance(value, ModelKind):
        return value
    if isinstance(value, str):
        text = value.lower()
        if text == QM:
            return QM
        return ModelKind.from_text(text)
    raise ValidationError(f"invalid backend {value!r}")


@dataclass(frozen=True, eq=False)
class MeasurementPlan:
    """A preparation, an ordered list of measurement sites, and a backend.

    Triple plans use positions 1..3; grid plans use :class:`GridIndex` cells.
    Models a/b accept only triple plans, model c only grid plans, ``qm`` both.
    """

    preparation: StateVector
    steps: tuple[Cell, ...]
    backend: Backend = QM
    trials: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        if not steps:
            raise ValidationError("plan must contain at least one step")
        grid_steps = [isinstance(c, GridIndex) for c in steps]
        if any(grid_steps) and not all(grid_steps):
            raise ValidationError("plan steps must not mix grid cells and triple positions")
        for c in steps:
            if not isinstance(c, GridIndex) and c not in (1, 2, 3):
                raise ValidationError(f"invalid triple position {c!r}")
        backend = normalize_backend(self.backend)
        if backend in (ModelKind.SYNCHRONIC_TRIPLE, ModelKind.PRODUCT_TRIPLE):
            if any(grid_steps):
                raise ValidationError(f"model {backend.value} is defined on the triple only")
        if backend is ModelKind.PM_SQUARE and not all(grid_steps):
            raise ValidationError("model c is defined on the grid only")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ValidationError(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "backend", backend)

    @property
    def is_hidden_variable(self) -> bool:
        return isinstance(self.backend, ModelKind)


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One measurement in a trajectory: site, outcome and post-update values."""

    cell: Cell
    outcome: int
    post_state: StateVector
    post_eps: EpsilonAssignment | None


@dataclass(frozen=True, eq=False)
class RunTranscript:
    """Ordered record of one trajectory; ``initial_eps`` is None for ``qm``."""

    plan: MeasurementPlan
    initial_eps: EpsilonAssignment | None
    records: tuple[StepRecord, ...]

    def __post_init__(self) -> None:
        if len(self.records) != len(self.plan.steps):
            raise ValidationError("transcript must contain one record per plan step")

    @property
    def outcomes(self) -> tuple[int, ...]:
        return tuple(r.outcome for r in self.records)


@dataclass(frozen=True, eq=False)
class SequenceStat:
    sequence: tuple[int, ...]
    count: int
    frequency: float
    exact_probability: float
    std_error: float


@dataclass(frozen=True, eq=False)
class StatsReport:
    """Empirical versus exact statistics for one plan."""

    plan: MeasurementPlan
    trials: int
    rows: tuple[SequenceStat, ...]
    max_abs_deviation: float
    chi_square: float
    triple_product_mean: float | None


@dataclass(frozen=True, eq=False)
class StatsComparison:
    passed: bool
    sigma: float
    failures: tuple[tuple[tuple[int, ...], float, float], ...]  # (sequence, dev, limit)


@dataclass(frozen=True, eq=False)
class TermEstimate:
    label: str
    coeff: int
    mean: float
    std_error: float


@dataclass(frozen=True, eq=False)
class WitnessReport:
    """A hidden-state jump that flipped a distant cell's would-be outcome."""

    found: bool
    attempts: int
    state: StateVector
    trigger_cell: GridIndex | None = None
    trigger_outcome: int | None = None
    flipped_cell: GridIndex | None = None
    changed_cells: tuple[GridIndex, ...] = ()
    eps_before: EpsilonAssignment | None = None
    eps_after: EpsilonAssignment | None = None
    transcript: RunTranscript | None = None


# --- per-trial random streams ------------------------------------------------

def draws_per_trial(plan: MeasurementPlan) -> int:
    """Number of uniforms one trajectory consumes under the fixed protocol."""
    steps = len(plan.steps)
    if plan.backend == QM:
        return steps
    if plan.backend is ModelKind.SYNCHRONIC_TRIPLE:
        return 1
    return model_arity(plan.backend) * (1 + steps)


def _blocks_per_trial(plan: MeasurementPlan) -> int:
    # Philox advances in ticks of 4 doubles; pad each trial to a whole tick.
    return max(1, math.ceil(draws_per_trial(plan) / 4))


def trial_rng(plan: MeasurementPlan, trial_index: int) -> np.random.Generator:
    """Generator positioned at trial ``trial_index`` of the plan's stream."""
    if trial_index < 0:
        raise ValidationError("trial index must be nonnegative")
    bits = np.random.Philox(key=plan.seed)
    bits.advance(trial_index * _blocks_per_trial(plan))
    return np.random.Generator(bits)


# --- single trajectories ------------------------------------------------------

def run_trajectory(plan: MeasurementPlan, rng: np.random.Generator) -> RunTranscript:
    """Run one trajectory, consuming randomness from ``rng``.

    Quantum backend: outcomes sampled by the Born rule, state collapsed.
    Hidden-variable backends: outcomes read off the assignment, state
    collapsed, assignment jumped per model.
    """
    psi = plan.preparation
    records: list[StepRecord] = []
    if plan.backend == QM:
        for cell in plan.steps:
            p_plus = born(psi, projector_for_cell(cell, 1))
            outcome = 1 if rng.random() < p_plus else -1
            psi = collapse(psi, projector_for_cell(cell, outcome))
            records.append(StepRecord(cell, outcome, psi, None))
        return RunTranscript(plan, None, tuple(records))

    kind = plan.backend
    hidden = HiddenState(draw_initial_assignment(kind, psi, rng), psi)
    initial_eps = hidden.eps
    for cell in plan.steps:
        outcome = outcome_of(hidden, cell)
        hidden = update_after_measurement(kind, hidden, cell, outcome, rng)
        records.append(StepRecord(cell, outcome, hidden.psi, hidden.eps))
    return RunTranscript(plan, initial_eps, tuple(records))


# --- vectorized batches -------------------------------------------------------

def _collapse_rows(psis: np.ndarray, outcomes: np.ndarray, cell: Cell) -> np.ndarray:
    plus = psis @ projector_for_cell(cell, 1).matrix.T
    minus = psis @ projector_for_cell(cell, -1).matrix.T
    out = np.where((outcomes == 1)[:, None], plus, minus)
    norms_sq = (out.real**2 + out.imag**2).sum(axis=1)
    if float(norms_sq.min()) <= MIN_BRANCH_PROB:
        raise ImpossibleBranchError(
            f"a trajectory realized a zero-probability branch at cell {cell}"
        )
    return out / np.sqrt(norms_sq)[:, None]


def _born_rows(psis: np.ndarray, cell: Cell) -> np.ndarray:
    projected = psis @ projector_for_cell(cell, 1).matrix.T
    return np.clip((projected.real**2 + projected.imag**2).sum(axis=1), 0.0, 1.0)


def _batch_outcomes(
    plan: MeasurementPlan,
    start: int,
    count: int,
    collect_eps: bool = False,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Outcomes (and optionally assignment history) for trials [start, start+count).

    Row ``k`` consumes exactly the random numbers that ``run_trajectory`` with
    ``trial_rng(plan, start + k)`` would consume.
    """
    steps = plan.steps
    n_steps = len(steps)
    blocks = _blocks_per_trial(plan)
    bits = np.random.Philox(key=plan.seed)
    bits.advance(start * blocks)
    uniforms = np.random.Generator(bits).random((count, blocks * 4))

    outcomes = np.empty((count, n_steps), dtype=np.int8)
    psis = np.broadcast_to(plan.preparation.amps, (count, 4)).copy()

    if plan.backend == QM:
        for t, cell in enumerate(steps):
            o = np.where(uniforms[:, t] < _born_rows(psis, cell), 1, -1).astype(np.int8)
            psis = _collapse_rows(psis, o, cell)
            outcomes[:, t] = o
        return outcomes, None

    kind = plan.backend
    arity = model_arity(kind)
    cell_pos = {c: i for i, c in enumerate(model_cells(kind))}
    history = (
        np.empty((count, n_steps + 1, arity), dtype=np.int8) if collect_eps else None
    )

    if kind is ModelKind.SYNCHRONIC_TRIPLE:
        cumulative = np.cumsum(_bell_overlap_probs(plan.preparation))
        idx = np.searchsorted(cumulative, uniforms[:, 0] * cumulative[-1], side="right")
        idx = np.minimum(idx, len(cumulative) - 1)
        sign_table = np.array([eps.signs for eps in support(kind)], dtype=np.int8)
        eps = sign_table[idx]
        for t, cell in enumerate(steps):
            outcomes[:, t] = eps[:, cell_pos[cell]]
        if history is not None:
            history[:] = eps[:, None, :]
        return outcomes, history

    if collect_eps:
        p_plus = plus_marginals_rows(kind, psis)
        eps = np.where(uniforms[:, :arity] < p_plus, 1, -1).astype(np.int8)
        history[:, 0, :] = eps
        for t, cell in enumerate(steps):
            o = eps[:, cell_pos[cell]].copy()
            outcomes[:, t] = o
            psis = _collapse_rows(psis, o, cell)
            p_plus = plus_marginals_rows(kind, psis)
            block = uniforms[:, arity * (1 + t): arity * (2 + t)]
            eps = np.where(block < p_plus, 1, -1).astype(np.int8)
            history[:, t + 1, :] = eps
        return outcomes, history

    # Outcomes-only fast path.  Each assignment entry owns a dedicated uniform
    # column, and entries never read downstream cannot influence anything (the
    # jump resamples from the collapsed state alone), so evaluating just the
    # next-measured cell's column against its own marginal reproduces the full
    # protocol outcome for outcome.
    o = np.where(
        uniforms[:, cell_pos[steps[0]]] < _born_rows(psis, steps[0]), 1, -1
    ).astype(np.int8)
    for t, cell in enumerate(steps):
        outcomes[:, t] = o
        if t + 1 == n_steps:
            break
        psis = _collapse_rows(psis, o, cell)
        nxt = steps[t + 1]
        column = uniforms[:, arity * (1 + t) + cell_pos[nxt]]
        o = np.where(column < _born_rows(psis, nxt), 1, -1).astype(np.int8)
    return outcomes, None


def run_batch(
    plan: MeasurementPlan,
    trials: int | None = None,
    collect_eps: bool = False,
    start: int = 0,
) -> tuple[np.ndarray, np.ndarray | None]:
    """All trial outcomes as an (trials, steps) ±1 array, chunk-merged.

    With ``collect_eps`` the full assignment history (trials, steps+1, arity)
    is returned as well (hidden-variable backends only).
    """
    total = plan.trials if trials is None else trials
    if total < 1:
        raise ValidationError("trials must be positive")
    if collect_eps and plan.backend == QM:
        raise ValidationError("the qm backend has no hidden assignment to collect")
    out_parts: list[np.ndarray] = []
    eps_parts: list[np.ndarray] = []
    done = 0
    while done < total:
        n = min(_CHUNK, total - done)
        outcomes, history = _batch_outcomes(plan, start + done, n, collect_eps)
        out_parts.append(outcomes)
        if history is not None:
            eps_parts.append(history)
        done += n
    outcomes = np.concatenate(out_parts, axis=0)
    history = np.concatenate(eps_parts, axis=0) if eps_parts else None
    return outcomes, history


# --- exact sequential distributions -------------------------------------------

def _all_sequences(length: int) -> list[tuple[int, ...]]:
    return [
        tuple(1 if (code >> t) & 1 else -1 for t in range(length))
        for code in range(1 << length)
    ]


def run_ensemble_exact(plan: MeasurementPlan) -> OutcomeDistribution:
    """Exact outcome-sequence distribution by propagating collapse updates.

    The quantum backend chains Born probabilities through the projection
    postulate; hidden-variable backends propagate their ensemble update.  The
    models are empirically adequate by construction, so both routes agree.
    """
    probs: dict[tuple[int, ...], float] = {seq: 0.0 for seq in _all_sequences(len(plan.steps))}

    if plan.backend == QM:
        def walk_qm(psi: StateVector, t: int, prefix: tuple[int, ...], acc: float) -> None:
            if t == len(plan.steps):
                probs[prefix] = acc
                return
            cell = plan.steps[t]
            for sign in (1, -1):
                p = born(psi, projector_for_cell(cell, sign))
                if p <= MIN_BRANCH_PROB:
                    continue
                walk_qm(
                    collapse(psi, projector_for_cell(cell, sign)),
                    t + 1,
                    prefix + (sign,),
                    acc * p,
                )

        walk_qm(plan.preparation, 0, (), 1.0)
        return OutcomeDistribution(probs)

    kind = plan.backend

    def walk_hv(dist, t: int, prefix: tuple[int, ...], acc: float) -> None:
        if t == len(plan.steps):
            probs[prefix] = acc
            return
        cell = plan.steps[t]
        for sign in (1, -1):
            p = marginal(dist, cell, sign)
            if p <= MIN_BRANCH_PROB:
                continue
            updated = update_after_measurement(kind, dist, cell, sign)
            walk_hv(updated, t + 1, prefix + (sign,), acc * p)

    walk_hv(init_distribution(kind, plan.preparation), 0, (), 1.0)
    return OutcomeDistribution(probs)


# --- statistics ----------------------------------------------------------------

def run_monte_carlo(plan: MeasurementPlan) -> StatsReport:
    """Sample ``plan.trials`` trajectories and tabulate against the exact law."""
    exact = run_ensemble_exact(plan)
    n_steps = len(plan.steps)
    counts = np.zeros(1 << n_steps, dtype=np.int64)
    done = 0
    while done < plan.trials:
        n = min(_CHUNK, plan.trials - done)
        outcomes, _ = _batch_outcomes(plan, done, n)
        bits = (outcomes == 1).astype(np.int64)
        codes = bits @ (1 << np.arange(n_steps, dtype=np.int64))
        counts += np.bincount(codes, minlength=1 << n_steps)
        done += n

    rows = []
    max_dev = 0.0
    chi_square = 0.0
    product_mean = 0.0
    for code, seq in enumerate(_all_sequences(n_steps)):
        count = int(counts[code])
        freq = count / plan.trials
        p = exact.prob(seq)
        se = math.sqrt(p * (1.0 - p) / plan.trials)
        rows.append(SequenceStat(seq, count, freq, p, se))
        max_dev = max(max_dev, abs(freq - p))
        expected_count = plan.trials * p
        if expected_count > 0.0:
            chi_square += (count - expected_count) ** 2 / expected_count
        product_mean += freq * math.prod(seq)
    rows.sort(key=lambda r: r.sequence)
    return StatsReport(
        plan=plan,
        trials=plan.trials,
        rows=tuple(rows),
        max_abs_deviation=max_dev,
        chi_square=chi_square,
        triple_product_mean=product_mean if n_steps == 3 else None,
    )


def compare_stats(
    empirical: StatsReport, exact: OutcomeDistribution, sigma: float = 5.0
) -> StatsComparison:
    """Flag outcomes whose empirical frequency strays beyond ``sigma`` binomial
    standard errors from the exact probability."""
    if empirical.trials < 1:
        raise ValidationError("empirical report must cover at least one trial")
    observed = {row.sequence for row in empirical.rows}
    if observed != set(exact.probs):
        raise ValidationError("empirical and exact outcome spaces do not match")
    failures = []
    for row in empirical.rows:
        p = exact.prob(row.sequence)
        limit = sigma * math.sqrt(p * (1.0 - p) / empirical.trials)
        dev = abs(row.frequency - p)
        if dev > limit:
            failures.append((row.sequence, dev, limit))
    return StatsComparison(passed=not failures, sigma=sigma, failures=tuple(failures))


# --- the six-term functional from sequential data -------------------------------

def cabello_term_estimates(
    backend: Backend | EpsilonAssignment,
    state: StateVector,
    trials: int,
    seed: int,
) -> tuple[TermEstimate, ...]:
    """Per-context estimates of the signed triple-product means.

    Contexts are measured in grid order; context ``i`` uses trial indices
    ``[i * trials, (i + 1) * trials)`` of the seed's stream family.  A static
    arity-9 assignment may stand in as the backend: outcomes are then fixed
    readouts and each term is exact.
    """
    if trials < 1:
        raise ValidationError("trials must be positive")
    terms: list[TermEstimate] = []
    static = isinstance(backend, EpsilonAssignment)
    if static and backend.arity != 9:
        raise ValidationError("a static backend needs an arity-9 assignment")
    if not static:
        backend = normalize_backend(backend)
        if backend not in (QM, ModelKind.PM_SQUARE):
            raise ValidationError(
                "the functional spans the grid; use backend qm, model c, or a static assignment"
            )
    for i, ctx in enumerate(grid_contexts()):
        coeff = -1 if (ctx.kind == "col" and ctx.index == 3) else 1
        if static:
            product = math.prod(backend.sign_at(c) for c in ctx.members)
            terms.append(TermEstimate(ctx.label, coeff, float(product), 0.0))
            continue
        plan = MeasurementPlan(state, ctx.members, backend, trials, seed)
        outcomes, _ = run_batch(plan, start=i * trials)
        products = np.prod(outcomes.astype(np.int64), axis=1)
        mean = float(products.mean())
        se = math.sqrt(max(1.0 - mean * mean, 0.0) / trials)
        terms.append(TermEstimate(ctx.label, coeff, mean, se))
    return tuple(terms)


def estimate_cabello(
    backend: Backend | EpsilonAssignment,
    state: StateVector,
    trials: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo estimate (value, standard error) of the functional."""
    terms = cabello_term_estimates(backend, state, trials, seed)
    value = sum(t.coeff * t.mean for t in terms)
    stderr = math.sqrt(sum(t.std_error**2 for t in terms))
    return value, stderr


# --- the jump nonlocality witness ------------------------------------------------

# Grid cells whose observable acts on exactly one tensor factor, with the
# factor it acts on (0 = first qubit, 1 = second qubit).
_SINGLE_FACTOR_QUBIT: dict[tuple[int, int], int] = {
    (1, 1): 0,  # ZI
    (1, 2): 1,  # IZ
    (2, 1): 1,  # IX
    (2, 2): 0,  # XI
}


def nonlocality_witness(
    state: StateVector, seed: int = 0, max_attempts: int = 512
) -> WitnessReport:
    """Exhibit a jump that flips a would-be outcome on the *other* qubit.

    Measures a single-factor cell and checks whether the post-jump assignment
    differs at a single-factor cell of the opposite tensor factor.  The search
    is exhaustive over such cell pairs with a small per-pair trial budget.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    singles = [GridIndex(r, c) for (r, c) in _SINGLE_FACTOR_QUBIT]
    pairs = [
        (trigger, target)
        for trigger in singles
        for target in singles
        if _SINGLE_FACTOR_QUBIT[(trigger.row, trigger.col)]
        != _SINGLE_FACTOR_QUBIT[(target.row, target.col)]
    ]
    kind = ModelKind.PM_SQUARE
    attempts = 0
    while attempts < max_attempts:
        for trigger, target in pairs:
            attempts += 1
            before = draw_initial_assignment(kind, state, rng)
            hidden = HiddenState(before, state)
            outcome = outcome_of(hidden, trigger)
            jumped = update_after_measurement(kind, hidden, trigger, outcome, rng)
            if outcome_of(jumped, target) == outcome_of(hidden, target):
                continue
            changed = tuple(
                cell
                for cell in model_cells(kind)
                if jumped.eps.sign_at(cell) != before.sign_at(cell)
            )
            plan = MeasurementPlan(state, (trigger,), kind, trials=1, seed=seed)
            record = StepRecord(trigger, outcome, jumped.psi, jumped.eps)
            return WitnessReport(
                found=True,
                attempts=attempts,
                state=state,
                trigger_cell=trigger,
                trigger_outcome=outcome,
                flipped_cell=target,
                changed_cells=changed,
                eps_before=before,
                eps_after=jumped.eps,
                transcript=RunTranscript(plan, before, (record,)),
            )
    return WitnessReport(found=False, attempts=attempts, state=state)
