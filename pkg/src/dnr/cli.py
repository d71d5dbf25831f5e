"""Command line: ``dnr solve|compare|timeseries|pareto|validate``.

Exit codes: 0 success, 1 solver failure or failed validation, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

from . import bench
from .caseio import FIXTURES, CaseParseError, ScheduleError, load_case, load_schedule, synthesize_schedule
from .metaheuristics import GA, SBPSO, FitnessSpec
from .powerflow import ENGINES, NEWTON_RAPHSON, PFOptions

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _common(p: argparse.ArgumentParser, formats: tuple[str, ...] = ("json", "csv")) -> None:
    p.add_argument("--case", required=True, help=f"fixture name ({', '.join(FIXTURES)}) or path to a .m / .json case")
    p.add_argument("--engine", default=NEWTON_RAPHSON, choices=ENGINES, help="power-flow engine (default %(default)s)")
    p.add_argument("--tol", type=float, default=1e-6, help="power-flow tolerance, pu (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed for the GA / PSO (default %(default)s)")
    p.add_argument("--out", metavar="DIR", help="also write report files into DIR")
    p.add_argument("--format", choices=formats, default=formats[0], help="stdout format (default %(default)s)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")


def _fitness(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w-loss", type=float, default=1.0, help="loss weight of the GA / PSO objective (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnr", description="Distribution network reconfiguration benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one method on one case")
    _common(p)
    p.add_argument("--method", required=True, choices=bench.METHODS)
    p.add_argument("--limit", type=int, default=1_000_000, help="spanning-tree limit for morton (default %(default)s)")
    p.add_argument("--timing", action="store_true", help="include wall_ms (makes output run-dependent)")
    _fitness(p)

    p = sub.add_parser("compare", help="run several methods with identical power-flow options")
    _common(p)
    p.add_argument(
        "--method",
        "--methods",
        dest="methods",
        default=",".join(bench.COMPARE_DEFAULT),
        help="comma-separated methods (default: all but morton)",
    )
    p.add_argument("--limit", type=int, default=1_000_000, help="spanning-tree limit for morton (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default %(default)s)")
    _fitness(p)

    p = sub.add_parser("timeseries", help="re-optimize over a load schedule")
    _common(p)
    p.add_argument("--method", "--methods", dest="methods", default="jakus", help="comma-separated methods (default %(default)s)")
    p.add_argument("--schedule", default="synthetic", help="schedule CSV path, or 'synthetic' (default)")
    p.add_argument("--days", type=int, default=7, help="days of synthetic schedule (default %(default)s)")
    p.add_argument("--resolution", type=int, default=60, help="synthetic schedule resolution, minutes (default %(default)s)")
    p.add_argument("--step-minutes", type=int, help="simulation step; must be a multiple of the schedule resolution")
    p.add_argument("--no-warm-start", dest="warm_start", action="store_false", help="start every step from the default ties")
    p.add_argument("--limit", type=int, default=1_000_000, help="spanning-tree limit for morton (default %(default)s)")
    _fitness(p)

    p = sub.add_parser("pareto", help="sweep the loss / voltage weight of the GA or PSO")
    _common(p)
    p.add_argument("--method", choices=(GA, SBPSO, "jakus", "khalil"), default=GA, help="ga (jakus) or sbpso (khalil)")
    p.add_argument("--weights", default="11", help="grid size N (0..1 evenly) or comma-separated weights (default 11)")
    p.add_argument("--runs", type=int, default=20, help="runs per weight (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default %(default)s)")

    p = sub.add_parser("validate", help="fixture diagnostics and invariant checks")
    _common(p, ("text", "json", "csv"))
    return parser


def _settings(args) -> bench.RunSettings:
    try:
        opts = PFOptions(engine=args.engine, tol=args.tol)
        fitness = FitnessSpec(w_loss=getattr(args, "w_loss", 1.0))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return bench.RunSettings(opts=opts, seed=args.seed, limit=getattr(args, "limit", 1_000_000), fitness=fitness)


def _load(spec: str):
    try:
        return load_case(spec)
    except (KeyError, FileNotFoundError, IsADirectoryError) as exc:
        raise UsageError(f"unknown case {spec!r}: {exc}") from None
    except (CaseParseError, ValueError) as exc:
        raise UsageError(f"cannot read case {spec!r}: {exc}") from None


def _methods(text: str) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    if not methods:
        raise UsageError("at least one method is required")
    bad = [m for m in methods if m not in bench.METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(bench.METHODS)}")
    return methods


def _weights(text: str) -> list[float]:
    try:
        if "," not in text and "." not in text:
            n = int(text)
            if n < 1:
                raise ValueError
            return [i / (n - 1) for i in range(n)] if n > 1 else [1.0]
        weights = [float(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise UsageError(f"bad weight grid {text!r}") from None
    if not weights or any(not 0.0 <= w <= 1.0 for w in weights):
        raise UsageError("weights must lie in [0, 1]")
    return weights


@contextmanager
def _mapper(jobs: int):
    if jobs <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield pool.map


def _write(out_dir: str | None, files: dict[str, str]) -> None:
    if not out_dir:
        return
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_solve(args) -> int:
    fx = _load(args.case)
    settings = _settings(args)
    report, _ = bench.run_report(fx, args.method, settings)
    doc = bench.solve_document(report, settings, args.timing)
    text = _dump(doc)
    table = bench.runs_to_csv([report], args.timing)
    stem = f"{fx.name}_{args.method}"
    _write(args.out, {f"{stem}.json": text, f"{stem}.csv": table})
    sys.stdout.write(table if args.format == "csv" else text)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_compare(args) -> int:
    fx = _load(args.case)
    settings = _settings(args)
    methods = _methods(args.methods)
    with _mapper(args.jobs) as map_fn:
        rep = bench.compare(fx, methods, settings, map_fn)
    text = _dump(rep.to_dict())
    table = rep.to_csv()
    _write(args.out, {f"compare_{fx.name}.json": text, f"compare_{fx.name}.csv": table})
    sys.stdout.write(table if args.format == "csv" else text)
    return EXIT_OK if any(r.ok for r in rep.rows) else EXIT_FAIL


def cmd_timeseries(args) -> int:
    fx = _load(args.case)
    settings = _settings(args)
    methods = _methods(args.methods)
    try:
        if args.schedule == "synthetic":
            schedule = synthesize_schedule(args.days, args.resolution, args.seed, buses=[b.number for b in fx.network.buses])
        else:
            with open(args.schedule, encoding="utf-8") as fh:
                schedule = load_schedule(fh.read())
        rep = bench.timeseries(fx, schedule, methods, settings, args.warm_start, args.step_minutes)
    except (OSError, ScheduleError) as exc:
        raise UsageError(f"schedule: {exc}") from None
    text = _dump(rep.to_dict())
    table = rep.steps_csv()
    _write(args.out, {f"timeseries_{fx.name}_summary.json": text, f"timeseries_{fx.name}_steps.csv": table})
    sys.stdout.write(table if args.format == "csv" else text)
    return EXIT_OK


def cmd_pareto(args) -> int:
    fx = _load(args.case)
    settings = _settings(args)
    method = {"jakus": GA, "khalil": SBPSO}.get(args.method, args.method)
    weights = _weights(args.weights)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    with _mapper(args.jobs) as map_fn:
        rep = bench.pareto(fx, method, weights, args.runs, settings, map_fn)
    text = _dump(rep.to_dict())
    stem = f"pareto_{fx.name}_{method}"
    _write(args.out, {f"{stem}.csv": rep.points_csv(), f"{stem}_front.csv": rep.front_csv(), f"{stem}.json": text})
    sys.stdout.write(rep.points_csv() if args.format == "csv" else text)
    return EXIT_OK


def cmd_validate(args) -> int:
    fx = _load(args.case)
    try:
        opts = PFOptions(engine=NEWTON_RAPHSON, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rep = bench.validate(fx, opts)
    text = _dump(rep.to_dict())
    table = rep.checks_csv()
    _write(args.out, {f"validate_{fx.name}.json": text, f"validate_{fx.name}.csv": table})
    sys.stdout.write({"json": text, "csv": table}.get(args.format, rep.to_text() + "\n"))
    return EXIT_OK if rep.ok else EXIT_FAIL


COMMANDS = {
    "solve": cmd_solve,
    "compare": cmd_compare,
    "timeseries": cmd_timeseries,
    "pareto": cmd_pareto,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dnr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
