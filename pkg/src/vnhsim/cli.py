"""Command-line front end: run, audit, and validate simulations.

`run` integrates a scenario and writes a CSV time series plus a JSON
summary.  `check` audits the feedback hypotheses at the initial state.
`validate` re-reads an emitted CSV and re-checks its row arithmetic.
CSV output is deterministic: identical invocations produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from os import makedirs
from os.path import join

import numpy as np

from .constraints import constraint_scales, evaluate, on_manifold, regularity
from .control import synthesize
from .dynamics import (
    TrajectoryRecord,
    energies,
    proposition4_check,
    simulate_closed_loop,
    simulate_nonholonomic,
)
from .errors import TransversalityViolation, VnhsimError
from .riemannian import TangentState
from .scenarios import BUILTIN_NAMES, Scenario, builtin, rebuild, resolve

EXIT_OK = 0
EXIT_SETUP = 1
EXIT_SINGULAR = 2
EXIT_CHECK_FAILED = 3


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def csv_header(n: int, m: int) -> str:
    cols = ["t"]
    cols += [f"q{i}" for i in range(n)]
    cols += [f"v{i}" for i in range(n)]
    cols += [f"u{a}" for a in range(m)]
    cols += [f"phi{a}" for a in range(m)]
    cols += ["energy", "kinetic", "condA"]
    return ",".join(cols)


def write_csv(path: str, rec: TrajectoryRecord, n: int, m: int) -> None:
    lines = [csv_header(n, m)]
    for k in range(len(rec)):
        row = [rec.times[k]]
        row += list(rec.positions[k])
        row += list(rec.velocities[k])
        row += list(rec.controls[k])
        row += list(rec.constraint_values[k])
        row += [rec.total_energy[k], rec.kinetic_energy[k], rec.condition_estimates[k]]
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _state_gap(r1: TrajectoryRecord, r2: TrajectoryRecord) -> float:
    rows = min(len(r1), len(r2))
    if rows == 0:
        return 0.0
    dq = np.abs(r1.positions[:rows] - r2.positions[:rows])
    dv = np.abs(r1.velocities[:rows] - r2.velocities[:rows])
    return float(max(np.max(dq), np.max(dv)))


def _richardson_ratio(sc: Scenario) -> float | None:
    """End-state error ratio for step sizes h, h/2, h/4; 16 at order 4."""
    finals = []
    for k in range(3):
        rec = simulate_closed_loop(sc.system, sc.initial, sc.h / 2**k, sc.steps * 2**k)
        if rec.halt is not None:
            return None
        finals.append(np.hstack([rec.positions[-1], rec.velocities[-1]]))
    d1 = float(np.max(np.abs(finals[0] - finals[1])))
    d2 = float(np.max(np.abs(finals[1] - finals[2])))
    return d1 / d2 if d2 > 0.0 else None


def _halt_dict(rec: TrajectoryRecord):
    if rec.halt is None:
        return None
    return {"time": rec.halt.time, "reason": rec.halt.reason, "kind": rec.halt.kind}


def _apply_overrides(sc: Scenario, args) -> Scenario:
    params = {}
    for item in args.param or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise VnhsimError(f"--param expects name=value, got {item!r}")
        try:
            params[name] = float(value)
        except ValueError:
            raise VnhsimError(f"--param {name}: {value!r} is not a number")
    if not (params or args.dt or args.t_final or args.project_initial):
        return sc
    return rebuild(
        sc,
        h=args.dt,
        t_final=args.t_final,
        parameters=params or None,
        project_initial=True if args.project_initial else None,
    )


def cmd_list(args) -> int:
    entries = [
        {"name": name, "description": builtin(name).description}
        for name in BUILTIN_NAMES
    ]
    if args.json:
        print(json.dumps(entries, indent=2))
    else:
        width = max(len(e["name"]) for e in entries)
        for e in entries:
            print(f"{e['name']:<{width}}  {e['description']}")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _apply_overrides(resolve(args.scenario), args)
    n, m = sc.system.dimension, sc.system.control_count
    out_dir = args.out or join("runs", sc.name)
    makedirs(out_dir, exist_ok=True)

    started = time.perf_counter()
    rec = simulate_closed_loop(sc.system, sc.initial, sc.h, sc.steps)
    write_csv(join(out_dir, "trajectory.csv"), rec, n, m)

    summary = {
        "name": sc.name,
        "h": sc.h,
        "t_final": sc.t_final,
        "steps": sc.steps,
        "rows_written": len(rec),
        "parameters": sc.parameters,
        "max_abs_phi": float(np.max(np.abs(rec.constraint_values))) if len(rec) else None,
        "final_energy": float(rec.total_energy[-1]) if len(rec) else None,
        "proposition4": proposition4_check(sc.system, sc.initial),
        "halt": _halt_dict(rec),
    }

    compare = args.compare_nonholonomic or sc.compare_nonholonomic
    if compare:
        rec_nh = simulate_nonholonomic(sc.system, sc.initial, sc.h, sc.steps)
        write_csv(join(out_dir, "nonholonomic.csv"), rec_nh, n, m)
        summary["sup_state_gap"] = _state_gap(rec, rec_nh)
        summary["nonholonomic_halt"] = _halt_dict(rec_nh)
    if args.order_check:
        summary["richardson_ratio"] = _richardson_ratio(sc)
    summary["wall_time_seconds"] = time.perf_counter() - started

    with open(join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

    if args.json:
        print(json.dumps(summary, indent=2))
    elif rec.halt is None:
        print(f"{sc.name}: {len(rec)} rows -> {out_dir}")
    if rec.halt is not None:
        print(
            f"{sc.name}: halted at t={rec.halt.time:g} ({rec.halt.reason}); "
            f"truncated output in {out_dir}",
            file=sys.stderr,
        )
        return EXIT_SINGULAR
    return EXIT_OK


def cmd_check(args) -> int:
    sc = _apply_overrides(resolve(args.scenario), args)
    s, c = sc.initial, sc.system.constraint
    values = evaluate(c, s).value
    scale = float(np.max(constraint_scales(c, s)))
    residual = float(np.max(np.abs(values)))
    report = regularity(c, s)
    audit = {
        "name": sc.name,
        "on_manifold_residual": residual,
        "constraint_scale": scale,
        "regularity_rank": report.rank,
        "smallest_singular_value": report.smallest_singular_value,
        "proposition4": proposition4_check(sc.system, sc.initial),
    }
    failures = []
    if not on_manifold(c, s):
        failures.append("initial state off the constraint manifold")
    if report.rank < c.count:
        failures.append(f"constraint jacobian rank {report.rank} < {c.count}")
    try:
        sol = synthesize(sc.system, s)
        audit["condition_estimate"] = sol.condition_estimate
        audit["control"] = [float(x) for x in sol.tau]
    except TransversalityViolation as exc:
        audit["condition_estimate"] = None
        failures.append(str(exc))
    audit["passed"] = not failures
    audit["failures"] = failures
    if args.json:
        print(json.dumps(audit, indent=2))
    else:
        for key, value in audit.items():
            print(f"{key}: {value}")
    return EXIT_OK if not failures else EXIT_CHECK_FAILED


def _check_value(label: str, stored: float, computed: float, errors: list[str]) -> None:
    if abs(stored - computed) > 1e-12 * max(1.0, abs(computed)):
        errors.append(f"{label}: stored {stored!r} != recomputed {computed!r}")


def cmd_validate(args) -> int:
    sc = _apply_overrides(resolve(args.scenario), args)
    n, m = sc.system.dimension, sc.system.control_count
    with open(args.csv, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != csv_header(n, m):
        print(f"{args.csv}: header does not match scenario {sc.name}", file=sys.stderr)
        return EXIT_SETUP
    errors: list[str] = []
    width = 2 * n + 2 * m + 4
    for idx, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != width:
            errors.append(f"line {idx}: expected {width} columns, got {len(parts)}")
            continue
        row = [float(x) for x in parts]
        if not all(np.isfinite(row)):
            errors.append(f"line {idx}: non-finite value")
            continue
        q = np.array(row[1 : 1 + n])
        v = np.array(row[1 + n : 1 + 2 * n])
        state = TangentState(q, v, row[0])
        total, kinetic = energies(sc.system, state)
        _check_value(f"line {idx} energy", row[-3], total, errors)
        _check_value(f"line {idx} kinetic", row[-2], kinetic, errors)
        phi = evaluate(sc.system.constraint, state).value
        for a in range(m):
            _check_value(f"line {idx} phi{a}", row[1 + 2 * n + m + a], float(phi[a]), errors)
    for message in errors[:20]:
        print(message, file=sys.stderr)
    if errors:
        print(f"{args.csv}: {len(errors)} problem(s)", file=sys.stderr)
        return EXIT_SETUP
    print(f"{args.csv}: {len(lines) - 1} rows consistent with {sc.name}")
    return EXIT_OK


def _add_scenario_flags(sub) -> None:
    sub.add_argument("scenario", help="builtin name or scenario file path")
    sub.add_argument("--dt", type=float, default=None, help="override step size")
    sub.add_argument("--t-final", type=float, default=None, help="override duration")
    sub.add_argument("--param", action="append", metavar="NAME=VALUE",
                     help="override a scenario parameter (repeatable)")
    sub.add_argument("--project-initial", action="store_true",
                     help="project the initial state onto the constraint manifold")
    sub.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnhsim",
        description="Simulate mechanical systems steered onto velocity constraints.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("list", help="list built-in scenarios")
    sub.add_argument("--json", action="store_true", help="machine-readable output")
    sub.set_defaults(fn=cmd_list)

    sub = subs.add_parser("run", help="integrate a scenario and write CSV output")
    _add_scenario_flags(sub)
    sub.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    sub.add_argument("--compare-nonholonomic", action="store_true",
                     help="also integrate the multiplier dynamics and report the gap")
    sub.add_argument("--order-check", action="store_true",
                     help="estimate the convergence order from h, h/2, h/4 runs")
    sub.set_defaults(fn=cmd_run)

    sub = subs.add_parser("check", help="audit the feedback hypotheses at the start state")
    _add_scenario_flags(sub)
    sub.set_defaults(fn=cmd_check)

    sub = subs.add_parser("validate", help="re-check the arithmetic of an emitted CSV")
    _add_scenario_flags(sub)
    sub.add_argument("csv", help="trajectory CSV produced by run")
    sub.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (VnhsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SETUP


if __name__ == "__main__":
    sys.exit(main())
