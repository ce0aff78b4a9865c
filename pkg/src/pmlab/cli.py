"""Command-line front end: parse experiment specifications, run them, and emit
machine-readable JSON reports.

Reports use a canonical serialization (sorted keys, fixed 12-significant-digit
float formatting) so identical (command, config) pairs produce byte-identical
output.  The schema ships with the package under ``schemas/report.schema.json``.

Exit codes: 0 success, 1 usage error, 2 internal consistency failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ConsistencyError, ImpossibleBranchError, ValidationError
from .harness import (
    QM,
    MeasurementPlan,
    cabello_term_estimates,
    compare_stats,
    nonlocality_witness,
    normalize_backend,
    run_ensemble_exact,
    run_monte_carlo,
)
from .hvmodels import ModelKind
from .kscheck import ks_contradiction_check
from .qcore import StateVector, make_state
from .square import (
    GRID_CELLS,
    Cell,
    GridIndex,
    build_square,
    cabello_value_exact,
    commutator_norm,
    grid_contexts,
    triple_spec,
)

SEED_ENV_VAR = "PMLAB_SEED"

#: Observed value of the functional in the 2009 trapped-ion experiment.
#: Reported for literature context only: it reflects hardware noise, which
#: this simulator deliberately does not model, so it is not a target value.
KIRCHMAIR_2009_VALUE = 5.46

_NAMED_STATES = {
    "00": (1, 0, 0, 0),
    "01": (0, 1, 0, 0),
    "10": (0, 0, 1, 0),
    "11": (0, 0, 0, 1),
    "singlet": (0, 1, -1, 0),
}


class UsageError(Exception):
    """Malformed command line or specification string."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we own the exit codes
        raise UsageError(message)


def parse_state(spec: str) -> StateVector:
    """Parse a state specification string.

    Forms: ``state:00|01|10|11|singlet``, ``bell:+-+|-++|++-|---`` (the
    common eigenbasis of the triple), or raw amplitudes
    ``amps:re,im;re,im;re,im;re,im`` (normalized automatically).
    """
    head, sep, rest = spec.partition(":")
    if not sep:
        raise UsageError(f"malformed state spec {spec!r}; expected prefix:value")
    if head == "state":
        if rest not in _NAMED_STATES:
            raise UsageError(f"unknown named state {rest!r}")
        return make_state(_NAMED_STATES[rest])
    if head == "bell":
        spec_table = triple_spec()
        if rest not in spec_table.names:
            raise UsageError(f"unknown eigenstate pattern {rest!r}")
        return spec_table.eigenvectors[spec_table.names.index(rest)]
    if head == "amps":
        parts = rest.split(";")
        if len(parts) != 4:
            raise UsageError("amps spec needs exactly four re,im pairs")
        amps = []
        for part in parts:
            pieces = part.split(",")
            if len(pieces) != 2:
                raise UsageError(f"malformed amplitude {part!r}; expected re,im")
            try:
                amps.append(complex(float(pieces[0]), float(pieces[1])))
            except ValueError:
                raise UsageError(f"non-numeric amplitude {part!r}") from None
        try:
            return make_state(amps)
        except ValidationError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"unknown state spec prefix {head!r}")


def parse_steps(spec: str) -> tuple[Cell, ...]:
    """Parse a step specification.

    ``r1``..``r3`` and ``c1``..``c3`` expand to the grid-ordered context.
    Custom plans list cells separated by ``;``: grid cells as ``row,col``
    pairs, triple positions as bare ``1``..``3``.  Custom plans may mix
    noncommuting cells.
    """
    text = spec.strip()
    by_label = {ctx.label: ctx for ctx in grid_contexts()}
    if text in by_label:
        return tuple(by_label[text].members)
    cells: list[Cell] = []
    for token in text.replace(" ", ";").split(";"):
        if not token:
            continue
        if "," in token:
            pieces = token.split(",")
            if len(pieces) != 2:
                raise UsageError(f"malformed grid cell {token!r}; expected row,col")
            try:
                cells.append(GridIndex(int(pieces[0]), int(pieces[1])))
            except (ValueError, ValidationError):
                raise UsageError(f"invalid grid cell {token!r}") from None
        else:
            try:
                cells.append(int(token))
            except ValueError:
                raise UsageError(f"invalid step token {token!r}") from None
    if not cells:
        raise UsageError("empty step specification")
    return tuple(cells)


# --- canonical JSON -------------------------------------------------------------

def _format_float(value: float) -> str:
    if value != value or value in (float("inf"), float("-inf")):
        raise ValidationError("reports must not contain NaN or infinity")
    if value == 0.0:  # normalizes -0.0
        return "0"
    return format(value, ".12g")


def canonical_json(value: object, indent: int = 2) -> str:
    """Serialize with sorted keys and fixed float formatting.

    Identical inputs always yield identical bytes, so reports can be diffed.
    """

    def render(node: object, level: int) -> str:
        pad = " " * (indent * (level + 1))
        closing = " " * (indent * level)
        if isinstance(node, dict):
            if not node:
                return "{}"
            parts = [
                f"{pad}{json.dumps(str(key))}: {render(node[key], level + 1)}"
                for key in sorted(node, key=str)
            ]
            return "{\n" + ",\n".join(parts) + "\n" + closing + "}"
        if isinstance(node, (list, tuple)):
            if not node:
                return "[]"
            parts = [f"{pad}{render(item, level + 1)}" for item in node]
            return "[\n" + ",\n".join(parts) + "\n" + closing + "]"
        if isinstance(node, bool):
            return "true" if node else "false"
        if node is None:
            return "null"
        if isinstance(node, (int, np.integer)):
            return str(int(node))
        if isinstance(node, (float, np.floating)):
            return _format_float(float(node))
        if isinstance(node, str):
            return json.dumps(node)
        raise ValidationError(f"cannot serialize {type(node).__name__} into a report")

    return render(value, 0)


# --- report helpers --------------------------------------------------------------

def _check(name: str, passed: bool, detail: str, critical: bool = True) -> dict:
    return {"name": name, "pass": bool(passed), "detail": detail, "critical": critical}


def _cell_str(cell: Cell) -> str:
    return str(cell)


def _seq_str(sequence: Sequence[int]) -> str:
    return "".join("+" if s == 1 else "-" for s in sequence)


def _amplitudes_json(state: StateVector) -> list[list[float]]:
    return [[float(a.real), float(a.imag)] for a in state.amps]


def _backend_text(backend) -> str:
    return QM if backend == QM else backend.value


# --- subcommand implementations ----------------------------------------------------

def _cmd_simulate(args) -> tuple[dict, str | None]:
    state = parse_state(args.state)
    steps = parse_steps(args.steps)
    try:
        plan = MeasurementPlan(state, steps, args.model, args.trials, args.seed)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    exact = run_ensemble_exact(plan)
    results: dict = {
        "exact_distribution": {_seq_str(seq): p for seq, p in exact.items()},
    }
    total = sum(exact.probs.values())
    checks = [
        _check(
            "exact_distribution_normalized",
            abs(total - 1.0) <= 1e-9,
            f"sum of exact probabilities = {total!r}",
        )
    ]
    csv_text = None
    if not args.exact:
        stats = run_monte_carlo(plan)
        comparison = compare_stats(stats, exact)
        results["trials"] = stats.trials
        results["outcomes"] = [
            {
                "sequence": _seq_str(row.sequence),
                "count": row.count,
                "frequency": row.frequency,
                "exact_probability": row.exact_probability,
                "std_error": row.std_error,
            }
            for row in stats.rows
        ]
        results["max_abs_deviation"] = stats.max_abs_deviation
        results["chi_square"] = stats.chi_square
        results["triple_product_mean"] = stats.triple_product_mean
        checks.append(
            _check(
                "empirical_within_5_sigma",
                comparison.passed,
                f"{len(comparison.failures)} outcome(s) beyond 5 binomial standard errors",
            )
        )
        if args.csv:
            lines = [["sequence", "count", "frequency", "exact_probability", "std_error"]]
            for row in stats.rows:
                lines.append(
                    [
                        _seq_str(row.sequence),
                        str(row.count),
                        _format_float(row.frequency),
                        _format_float(row.exact_probability),
                        _format_float(row.std_error),
                    ]
                )
            csv_text = "\n".join(",".join(line) for line in lines) + "\n"
    config = {
        "tool_version": __version__,
        "model": _backend_text(plan.backend),
        "state_spec": args.state,
        "plan": [_cell_str(c) for c in steps],
        "trials": args.trials,
        "seed": args.seed,
        "exact": bool(args.exact),
    }
    return {"command": "simulate", "config": config, "results": results, "checks": checks}, csv_text


def _cmd_inequality(args) -> dict:
    state = parse_state(args.state)
    if args.model == "static":
        best = ks_contradiction_check().maximizers[0]
        backend = best
        model_text = "static"
    else:
        backend = normalize_backend(args.model)
        if backend not in (QM, ModelKind.PM_SQUARE):
            raise UsageError("inequality spans the grid; use --model qm, c or static")
        model_text = _backend_text(backend)
    terms = cabello_term_estimates(backend, state, args.trials, args.seed)
    value = sum(t.coeff * t.mean for t in terms)
    stderr = math.sqrt(sum(t.std_error**2 for t in terms))
    exact = cabello_value_exact(state)
    results = {
        "estimate": value,
        "std_error": stderr,
        "terms": [
            {
                "context": t.label,
                "coefficient": t.coeff,
                "mean": t.mean,
                "std_error": t.std_error,
            }
            for t in terms
        ],
        "exact_quantum_value": exact,
        "noncontextual_bound": 4,
        "literature_context": {
            "kirchmair_2009_trapped_ions": KIRCHMAIR_2009_VALUE,
            "note": (
                "observed value for the singlet in the 2009 trapped-ion "
                "experiment; reflects hardware noise and is outside this "
                "simulator's quantitative scope"
            ),
        },
    }
    checks = [
        _check(
            "exact_quantum_value_is_6",
            abs(exact - 6.0) <= 1e-9,
            f"exact functional value = {exact!r}",
        )
    ]
    if args.model == "static":
        checks.append(
            _check(
                "static_estimate_within_bound",
                value <= 4.0 + 1e-9,
                f"static-assignment estimate = {value!r}, bound 4",
            )
        )
        results["static_assignment"] = str(backend)
    else:
        checks.append(
            _check(
                "sequential_estimate_is_6",
                abs(value - 6.0) <= 1e-9,
                f"sequential estimate = {value!r} (context products are deterministic)",
            )
        )
    config = {
        "tool_version": __version__,
        "model": model_text,
        "state_spec": args.state,
        "trials": args.trials,
        "seed": args.seed,
    }
    return {"command": "inequality", "config": config, "results": results, "checks": checks}


def _cmd_ks_check(_args) -> dict:
    report = ks_contradiction_check()
    histogram: dict[str, int] = {}
    for satisfied in report.satisfied_per_valuation:
        histogram[str(satisfied)] = histogram.get(str(satisfied), 0) + 1
    results = {
        "max_functional": report.max_functional,
        "maximizer_count": report.maximizer_count,
        "maximizer_codes": [eps.code for eps in report.maximizers],
        "exists_satisfying_all": report.exists_satisfying_all,
        "max_constraints_satisfied": report.max_constraints_satisfied,
        "satisfied_histogram": histogram,
        "quantum_value": 6.0,
    }
    checks = [
        _check(
            "no_valuation_satisfies_all_contexts",
            not report.exists_satisfying_all,
            f"best valuation satisfies {report.max_constraints_satisfied} of 6 constraints",
        ),
        _check(
            "static_bound_is_4",
            report.max_functional == 4,
            f"max functional over 512 valuations = {report.max_functional}",
        ),
    ]
    config = {"tool_version": __version__}
    return {"command": "ks-check", "config": config, "results": results, "checks": checks}


def _cmd_tables(_args) -> dict:
    spec = triple_spec()
    eigenstates = [
        {
            "pattern": name,
            "amplitudes": _amplitudes_json(vec),
            "eigenvalues": list(vals),
        }
        for name, vec, vals in zip(spec.names, spec.eigenvectors, spec.eigenvalues)
    ]
    square = build_square()
    grid = [
        {"cell": _cell_str(idx), "label": square.observable(idx).label}
        for idx in GRID_CELLS
    ]
    commuting = []
    for a in GRID_CELLS:
        for b in GRID_CELLS:
            if a.flat < b.flat and commutator_norm(square.observable(a), square.observable(b)) <= 1e-12:
                commuting.append([_cell_str(a), _cell_str(b)])
    ctxs = [
        {"label": ctx.label, "members": [_cell_str(m) for m in ctx.members], "sign": ctx.sign}
        for ctx in grid_contexts()
    ]
    results = {
        "triple_observables": [obs.label for obs in spec.observables],
        "triple_eigenstates": eigenstates,
        "grid": grid,
        "commuting_pairs": commuting,
        "contexts": ctxs,
    }
    checks = [
        _check(
            "commuting_pairs_are_shared_lines",
            len(commuting) == 18,
            f"{len(commuting)} unordered commuting pairs (9 row + 9 column)",
        ),
        _check(
            "context_signs",
            [c["sign"] for c in ctxs] == [1, 1, 1, 1, 1, -1],
            "rows and columns 1-2 multiply to +I, column 3 to -I",
        ),
    ]
    config = {"tool_version": __version__}
    return {"command": "tables", "config": config, "results": results, "checks": checks}


def _cmd_witness(args) -> dict:
    state = parse_state(args.state)
    report = nonlocality_witness(state, seed=args.seed, max_attempts=args.budget)
    results: dict = {"found": report.found, "attempts": report.attempts}
    if report.found:
        results.update(
            {
                "trigger_cell": _cell_str(report.trigger_cell),
                "trigger_outcome": report.trigger_outcome,
                "flipped_cell": _cell_str(report.flipped_cell),
                "changed_cells": [_cell_str(c) for c in report.changed_cells],
                "eps_before": str(report.eps_before),
                "eps_after": str(report.eps_after),
            }
        )
    checks = [
        _check(
            "witness_found",
            report.found,
            "a jump flipped a would-be outcome on the other qubit"
            if report.found
            else "no flip found within the trial budget",
            critical=False,
        )
    ]
    config = {
        "tool_version": __version__,
        "state_spec": args.state,
        "seed": args.seed,
        "budget": args.budget,
    }
    return {"command": "witness", "config": config, "results": results, "checks": checks}


# --- entry point ---------------------------------------------------------------------

def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None
    if not 0 <= value < 2**64:
        raise UsageError(f"{SEED_ENV_VAR} must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="pmlab",
        description="Sequential-measurement laboratory for the Peres-Mermin square.",
        epilog=f"The default --seed is 0, overridable via the {SEED_ENV_VAR} environment variable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a measurement plan and report statistics")
    sim.add_argument("--model", default="qm", choices=["qm", "a", "b", "c"])
    sim.add_argument("--state", default="state:00", help="state spec, e.g. state:singlet")
    sim.add_argument(
        "--steps",
        required=True,
        help="r1..r3 / c1..c3, or cells like '1,1;1,2' (grid) or '1;2;3' (triple)",
    )
    sim.add_argument("--trials", type=int, default=100_000)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--exact", action="store_true", help="exact distribution only, no sampling")
    sim.add_argument("--csv", metavar="PATH", default=None, help="also write the outcome table as CSV")

    ineq = sub.add_parser("inequality", help="estimate the six-term functional sequentially")
    ineq.add_argument("--model", default="c", choices=["qm", "c", "static"])
    ineq.add_argument("--state", default="state:singlet")
    ineq.add_argument("--trials", type=int, default=10_000)
    ineq.add_argument("--seed", type=int, default=None)

    sub.add_parser("ks-check", help="brute-force the 512 static assignments")

    sub.add_parser("tables", help="print the triple eigenbasis and the operator grid")

    wit = sub.add_parser("witness", help="exhibit a jump flipping a distant would-be outcome")
    wit.add_argument("--state", default="state:00")
    wit.add_argument("--seed", type=int, default=None)
    wit.add_argument("--budget", type=int, default=512)

    return parser


def run_command(argv: Sequence[str], stdout=None) -> int:
    """Run one CLI invocation; prints the report and returns the exit code."""
    out = sys.stdout if stdout is None else stdout
    try:
        args = build_parser().parse_args(list(argv))
        if getattr(args, "seed", None) is None and args.command in (
            "simulate",
            "inequality",
            "witness",
        ):
            args.seed = _default_seed()
        if getattr(args, "trials", 1) is not None and getattr(args, "trials", 1) < 1:
            raise UsageError("--trials must be at least 1")
        if getattr(args, "seed", 0) is not None and not 0 <= getattr(args, "seed", 0) < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")

        csv_text = None
        if args.command == "simulate":
            report, csv_text = _cmd_simulate(args)
        elif args.command == "inequality":
            report = _cmd_inequality(args)
        elif args.command == "ks-check":
            report = _cmd_ks_check(args)
        elif args.command == "tables":
            report = _cmd_tables(args)
        else:
            report = _cmd_witness(args)
        if csv_text is not None:
            try:
                with open(args.csv, "w", newline="") as handle:
                    handle.write(csv_text)
            except OSError as exc:
                raise UsageError(f"cannot write CSV to {args.csv!r}: {exc}") from None
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConsistencyError, ImpossibleBranchError) as exc:
        print(f"internal consistency failure: {exc}", file=sys.stderr)
        return 2

    print(canonical_json(report), file=out)
    for check in report["checks"]:
        if check["critical"] and not check["pass"]:
            return 2
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
