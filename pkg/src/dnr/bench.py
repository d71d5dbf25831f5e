"""Benchmark drivers behind the command line: single runs, comparisons,
time series, Pareto sweeps and fixture diagnostics.

Everything here returns plain dataclasses with ``to_dict`` / CSV helpers so
the CLI only has to route flags and write files. Reports carry the schema
tag ``dnr-report/1``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .caseio import CaseFixture, Schedule
from .graphs import WeightedGraph, count_spanning_trees, minimum_spanning_tree
from .heuristics import (
    Solution,
    SolverError,
    baran_branch_exchange,
    merlin_loop_cutting,
    montoya_mst,
    morton_brute_force,
    salkuti_voltage_exchange,
)
from .metaheuristics import (
    GA,
    SBPSO,
    FitnessSpec,
    GAParams,
    ParetoPoint,
    PSOParams,
    jakus_ga,
    khalil_sbpso,
    non_dominated,
    pareto_sweep,
)
from .network import PQ, Network, NetworkError, SwitchConfiguration, apply_configuration
from .powerflow import (
    DIRECT_LOAD_FLOW,
    DISTFLOW_FULL,
    NEWTON_RAPHSON,
    PFOptions,
    PowerFlowError,
    PowerFlowResult,
    direct_load_flow,
    distflow_sweep,
    power_balance_error,
    solve,
)

log = logging.getLogger(__name__)

SCHEMA = "dnr-report/1"
METHODS = ("merlin", "baran", "salkuti", "montoya", "morton", "jakus", "khalil")
COMPARE_DEFAULT = ("merlin", "baran", "salkuti", "montoya", "jakus", "khalil")
SEEDED = ("jakus", "khalil")
NO_SOLUTION = "no solution"

# cross-engine agreement thresholds used by validate
V_AGREE = 1e-4
LOSS_AGREE = 5e-3
BALANCE_TOL = 1e-6


@dataclass(frozen=True)
class RunSettings:
    """Knobs shared by every method in one invocation."""

    opts: PFOptions = PFOptions()
    seed: int = 0
    limit: int = 1_000_000
    fitness: FitnessSpec = FitnessSpec()
    ga: GAParams = GAParams()
    pso: PSOParams = PSOParams()

    def pf_dict(self) -> dict:
        o = self.opts
        return {"engine": o.engine, "tol": o.tol, "max_iter": o.max_iter, "flat_start": o.flat_start}


def objective_of(method: str, fitness: FitnessSpec) -> dict:
    if method in SEEDED:
        return {
            "kind": "weighted",
            "w_loss": fitness.w_loss,
            "w_vmin": fitness.w_vmin,
            "loss_norm": fitness.loss_norm,
            "vmin_target": fitness.vmin_target,
        }
    if method == "salkuti":
        return {"kind": "voltage_then_losses"}
    return {"kind": "losses"}


def start_configuration(fx: CaseFixture) -> SwitchConfiguration:
    """Radial starting point: the default ties, or the minimum-impedance tree of a meshed case."""
    if apply_configuration(fx.network, fx.default_ties).is_radial:
        return fx.default_ties
    g = WeightedGraph.from_network(fx.network)
    return minimum_spanning_tree(g).to_config(g)


def run_method(
    net: Network,
    method: str,
    settings: RunSettings,
    start: SwitchConfiguration,
    warm: SwitchConfiguration | None = None,
    seed: int | None = None,
) -> Solution:
    """Run one method from the radial ``start``.

    ``warm`` (a previous solution) replaces ``start`` for the methods that
    begin from a configuration: Baran, Salkuti and the GA. Merlin and
    Montoya start all-closed, Morton is exhaustive and the PSO searches
    the loops of ``start``.
    """
    seed = settings.seed if seed is None else seed
    opts = settings.opts
    origin = warm if warm is not None else start
    if method == "merlin":
        return merlin_loop_cutting(net, opts)
    if method == "baran":
        return baran_branch_exchange(net, origin, opts)
    if method == "salkuti":
        return salkuti_voltage_exchange(net, origin, opts)
    if method == "montoya":
        return montoya_mst(net, opts)
    if method == "morton":
        return morton_brute_force(net, opts, limit=settings.limit)
    if method == "jakus":
        return jakus_ga(net, replace(settings.ga, rng_seed=seed), settings.fitness, opts, warm_start=warm, default_ties=start)
    if method == "khalil":
        return khalil_sbpso(net, replace(settings.pso, rng_seed=seed), settings.fitness, opts, default_ties=start)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


# -- single runs ------------------------------------------------------------------


@dataclass
class RunReport:
    """One method on one case: the results-table row plus telemetry."""

    case: str
    method: str
    objective: dict
    losses_kw: float | None
    v_min: float | None
    v_max: float | None
    npf: int
    wall_ms: float
    config: list[str]
    seed: int | None
    status: str = "ok"
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "case": self.case,
            "method": self.method,
            "status": self.status,
            "objective": self.objective,
            "losses_kw": self.losses_kw,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "npf": self.npf,
            "config": list(self.config),
            "seed": self.seed,
        }
        if timing:
            d["wall_ms"] = self.wall_ms
        if self.reason:
            d["reason"] = self.reason
        return d


RUN_CSV_FIELDS = ("case", "method", "status", "losses_kw", "v_min", "v_max", "npf", "wall_ms", "open_branches", "seed", "reason")


def _num(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _run_row(r: RunReport, timing: bool) -> list:
    return [
        r.case,
        r.method,
        r.status,
        _num(r.losses_kw),
        _num(r.v_min),
        _num(r.v_max),
        r.npf,
        _num(r.wall_ms) if timing else "",
        " ".join(r.config),
        "" if r.seed is None else r.seed,
        r.reason,
    ]


def runs_to_csv(reports: list[RunReport], timing: bool = True) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RUN_CSV_FIELDS)
    for r in reports:
        w.writerow(_run_row(r, timing))
    return out.getvalue()


def report_from_solution(case: str, sol: Solution, objective: dict, seed: int | None) -> RunReport:
    return RunReport(
        case=case,
        method=sol.method,
        objective=objective,
        losses_kw=sol.losses_kw,
        v_min=sol.v_min,
        v_max=sol.v_max,
        npf=sol.npf,
        wall_ms=sol.wall_ms,
        config=list(sol.open_names),
        seed=seed,
    )


def run_report(
    fx: CaseFixture,
    method: str,
    settings: RunSettings,
    warm: SwitchConfiguration | None = None,
    seed: int | None = None,
    net: Network | None = None,
) -> tuple[RunReport, Solution | None]:
    """Run a method and wrap the outcome; a failure becomes a ``no solution`` report."""
    net = fx.network if net is None else net
    seed = settings.seed if seed is None else seed
    objective = objective_of(method, settings.fitness)
    seed_field = seed if method in SEEDED else None
    t0 = time.perf_counter()
    try:
        sol = run_method(net, method, settings, start_configuration(fx), warm, seed)
    except (SolverError, PowerFlowError, NetworkError) as exc:
        npf = getattr(exc, "npf", 0)
        log.info("%s on %s failed: %s", method, fx.name, exc)
        wall = (time.perf_counter() - t0) * 1e3
        return RunReport(fx.name, method, objective, None, None, None, npf, wall, [], seed_field, NO_SOLUTION, str(exc)), None
    return report_from_solution(fx.name, sol, objective, seed_field), sol


def solve_document(report: RunReport, settings: RunSettings, timing: bool) -> dict:
    return {
        "schema": SCHEMA,
        "command": "solve",
        "pf_options": settings.pf_dict(),
        "report": report.to_dict(timing),
    }


# -- compare --------------------------------------------------------------------------


@dataclass
class CompareReport:
    case: str
    settings: RunSettings
    rows: list[RunReport]

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "schema": SCHEMA,
            "command": "compare",
            "case": self.case,
            "pf_options": self.settings.pf_dict(),
            "seed": self.settings.seed,
            "rows": [r.to_dict(timing) for r in self.rows],
        }

    def to_csv(self, timing: bool = True) -> str:
        return runs_to_csv(self.rows, timing)


def _compare_task(task: tuple) -> RunReport:
    fx, method, settings = task
    return run_report(fx, method, settings)[0]


def compare(fx: CaseFixture, methods, settings: RunSettings, map_fn=map) -> CompareReport:
    """Every method with the same power-flow options; rows keep the input order."""
    methods = list(methods)
    if not methods:
        raise ValueError("compare needs at least one method")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    rows = list(map_fn(_compare_task, [(fx, m, settings) for m in methods]))
    return CompareReport(fx.name, settings, rows)


# -- time series ------------------------------------------------------------------------


@dataclass
class StepReport:
    step: int
    timestamp: str
    run: RunReport
    switch_changes: int
    flagged: bool = False


@dataclass
class SeriesSummary:
    method: str
    energy_kwh: float
    savings: float
    switch_changes: int
    reconfigurations: int
    flagged_steps: int
    npf: int
    wall_ms: float


@dataclass
class TimeseriesReport:
    case: str
    step_minutes: int
    warm_start: bool
    settings: RunSettings
    baseline_kw: list[float]
    baseline_kwh: float
    steps: dict[str, list[StepReport]]
    summary: dict[str, SeriesSummary]
    timestamps: list[str] = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        methods = {}
        for m, s in self.summary.items():
            d = {
                "energy_kwh": s.energy_kwh,
                "savings": s.savings,
                "savings_pct": 100.0 * s.savings,
                "switch_changes": s.switch_changes,
                "reconfigurations": s.reconfigurations,
                "flagged_steps": s.flagged_steps,
                "npf": s.npf,
            }
            if timing:
                d["wall_ms"] = s.wall_ms
                d["mean_step_ms"] = s.wall_ms / max(len(self.steps[m]), 1)
            methods[m] = d
        return {
            "schema": SCHEMA,
            "command": "timeseries",
            "case": self.case,
            "pf_options": self.settings.pf_dict(),
            "seed": self.settings.seed,
            "steps": len(self.timestamps),
            "step_minutes": self.step_minutes,
            "warm_start": self.warm_start,
            "baseline": {"config": "default ties", "energy_kwh": self.baseline_kwh},
            "methods": methods,
        }

    def steps_csv(self, timing: bool = True) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TIMESERIES_CSV_FIELDS)
        for m, steps in self.steps.items():
            for s in steps:
                r = s.run
                w.writerow(
                    [
                        s.step,
                        s.timestamp,
                        m,
                        _num(r.losses_kw),
                        _num(self.baseline_kw[s.step]),
                        _num(r.v_min),
                        _num(r.v_max),
                        r.npf,
                        _num(r.wall_ms) if timing else "",
                        s.switch_changes,
                        int(s.flagged),
                        " ".join(r.config),
                        r.reason,
                    ]
                )
        return out.getvalue()


TIMESERIES_CSV_FIELDS = (
    "step",
    "timestamp",
    "method",
    "losses_kw",
    "baseline_kw",
    "v_min",
    "v_max",
    "npf",
    "wall_ms",
    "switch_changes",
    "flagged",
    "open_branches",
    "reason",
)


def _evaluate(net: Network, cfg: SwitchConfiguration, opts: PFOptions) -> PowerFlowResult:
    return solve(apply_configuration(net, cfg), opts)


def _step_network(net: Network, schedule: Schedule, step: int) -> Network:
    load, gen = schedule.factors(net, step)
    return net.scaled(load=load, gen=gen)


def timeseries(
    fx: CaseFixture,
    schedule: Schedule,
    methods,
    settings: RunSettings,
    warm_start: bool = True,
    step_minutes: int | None = None,
) -> TimeseriesReport:
    """Re-optimize at every schedule step and compare energy against the static default ties.

    A step whose solver fails keeps the previous configuration (the start
    configuration at step 0), is re-evaluated there and flagged. Seeded
    methods use the run seed at every step, so identical steps give
    identical answers.
    """
    if step_minutes is not None and step_minutes != schedule.resolution_min:
        schedule = schedule.resample(step_minutes)
    step_minutes = schedule.resolution_min
    hours = step_minutes / 60.0
    start = start_configuration(fx)
    nets = [_step_network(fx.network, schedule, t) for t in range(len(schedule))]

    baseline_kw = []
    for t, net in enumerate(nets):
        res = _evaluate(net, fx.default_ties, settings.opts)
        if not res.converged:
            raise PowerFlowError(f"baseline power flow failed at step {t} ({res.message})")
        baseline_kw.append(float(res.losses_kw))
    baseline_kwh = math.fsum(p * hours for p in baseline_kw)

    steps: dict[str, list[StepReport]] = {}
    summary: dict[str, SeriesSummary] = {}
    for method in methods:
        prev: SwitchConfiguration | None = None
        rows = []
        for t, net in enumerate(nets):
            warm = prev if warm_start else None
            report, sol = run_report(fx, method, settings, warm=warm, net=net)
            flagged = sol is None
            if flagged:
                cfg = prev if prev is not None else start
                report = _inherited(fx.name, net, cfg, settings, report)
            else:
                cfg = sol.config
            changes = 0 if prev is None else len(prev.open_branches ^ cfg.open_branches)
            rows.append(StepReport(t, schedule.timestamps[t], report, changes, flagged))
            prev = cfg
        steps[method] = rows
        energy = math.fsum((r.run.losses_kw if r.run.losses_kw is not None else math.nan) * hours for r in rows)
        summary[method] = SeriesSummary(
            method=method,
            energy_kwh=energy,
            savings=1.0 - energy / baseline_kwh if baseline_kwh > 0 else 0.0,
            switch_changes=sum(r.switch_changes for r in rows),
            reconfigurations=sum(1 for r in rows if r.switch_changes),
            flagged_steps=sum(1 for r in rows if r.flagged),
            npf=sum(r.run.npf for r in rows),
            wall_ms=math.fsum(r.run.wall_ms for r in rows),
        )
    return TimeseriesReport(
        fx.name, step_minutes, warm_start, settings, baseline_kw, baseline_kwh, steps, summary, list(schedule.timestamps)
    )


def _inherited(case: str, net: Network, cfg: SwitchConfiguration, settings: RunSettings, failed: RunReport) -> RunReport:
    res = _evaluate(net, cfg, settings.opts)
    ok = res.converged
    v = res.v_mag[res.energized] if ok else None
    return replace(
        failed,
        losses_kw=float(res.losses_kw) if ok else None,
        v_min=float(v.min()) if ok else None,
        v_max=float(v.max()) if ok else None,
        config=net.names_of(cfg),
        status="inherited",
    )


# -- Pareto --------------------------------------------------------------------------------

HIGHLIGHT_WEIGHTS = (0.8, 0.9)


@dataclass
class ParetoReport:
    case: str
    method: str
    runs: int
    settings: RunSettings
    points: list[ParetoPoint]
    front: list[ParetoPoint]

    def to_dict(self) -> dict:
        highlight = [_point(p) for p in self.points if any(abs(p.w_loss - w) < 1e-9 for w in HIGHLIGHT_WEIGHTS)]
        return {
            "schema": SCHEMA,
            "command": "pareto",
            "case": self.case,
            "method": self.method,
            "runs_per_weight": self.runs,
            "pf_options": self.settings.pf_dict(),
            "seed": self.settings.seed,
            "points": [_point(p) for p in self.points],
            "front": [_point(p) for p in self.front],
            "highlight": highlight,
        }

    def points_csv(self) -> str:
        return _points_csv(self.points)

    def front_csv(self) -> str:
        return _points_csv(sorted(self.front, key=lambda p: p.losses_kw))


PARETO_CSV_FIELDS = ("w_loss", "mean_losses_kw", "mean_v_min", "runs")


def _point(p: ParetoPoint) -> dict:
    return {"w_loss": p.w_loss, "mean_losses_kw": p.losses_kw, "mean_v_min": p.v_min, "runs": p.runs}


def _points_csv(points: list[ParetoPoint]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(PARETO_CSV_FIELDS)
    for p in points:
        w.writerow([repr(p.w_loss), repr(p.losses_kw), repr(p.v_min), p.runs])
    return out.getvalue()


def pareto(
    fx: CaseFixture,
    method: str,
    weights,
    runs: int,
    settings: RunSettings,
    map_fn=map,
) -> ParetoReport:
    """Weight sweep of the GA (``ga``) or the SBPSO (``sbpso``) plus its non-dominated subset."""
    if method not in (GA, SBPSO):
        raise ValueError(f"unknown method {method!r}; choose 'ga' or 'sbpso'")
    points = pareto_sweep(
        fx.network,
        method,
        weights,
        settings.opts,
        runs_per_weight=runs,
        default_ties=start_configuration(fx),
        base_seed=settings.seed,
        ga_params=settings.ga,
        pso_params=settings.pso,
        map_fn=map_fn,
    )
    return ParetoReport(fx.name, method, runs, settings, points, non_dominated(points))


# -- validate ---------------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""
    severity: str = "error"  # "error" fails validate, "warning" is reported only


@dataclass
class ValidateReport:
    case: str
    counts: dict
    radial: bool
    loops: int
    spanning_trees: int
    engines: dict
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks if c.severity == "error")

    def summary(self) -> str:
        c = self.counts
        head = f"{c['buses']} buses, {c['branches']} branches"
        if self.radial:
            return f"{head}, {c['ties']} ties, radial: yes"
        return f"{head}, meshed, {self.loops} loops"

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "command": "validate",
            "case": self.case,
            "summary": self.summary(),
            "counts": self.counts,
            "radial": self.radial,
            "loops": self.loops,
            "spanning_trees": self.spanning_trees,
            "engines": self.engines,
            "checks": [{"name": c.name, "ok": c.ok, "severity": c.severity, "detail": c.detail} for c in self.checks],
            "ok": self.ok,
        }

    def checks_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(VALIDATE_CSV_FIELDS)
        for c in self.checks:
            w.writerow([self.case, c.name, int(c.ok), c.severity, c.detail])
        return out.getvalue()

    def to_text(self) -> str:
        lines = [f"{self.case}: {self.summary()}"]
        c = self.counts
        lines.append(
            f"loads {c['loads']}, generators {c['generators']}, slacks {c['slacks']}, "
            f"switchable {c['switchable']}, spanning trees {self.spanning_trees}"
        )
        for name, e in self.engines.items():
            if e.get("converged"):
                lines.append(
                    f"  {name}: losses {e['losses_kw']:.4f} kW, max |dV| {e['max_dv']:.2e} pu, "
                    f"loss diff {e['loss_rel']:.2e}, balance {e['balance']:.1e} pu"
                )
            else:
                lines.append(f"  {name}: did not converge ({e.get('message', '')})")
        for chk in self.checks:
            mark = "ok" if chk.ok else ("FAIL" if chk.severity == "error" else "warn")
            lines.append(f"[{mark}] {chk.name}" + (f": {chk.detail}" if chk.detail else ""))
        return "\n".join(lines)


VALIDATE_CSV_FIELDS = ("case", "check", "ok", "severity", "detail")


def _engine_entry(res: PowerFlowResult, ref: PowerFlowResult | None, view) -> dict:
    if not res.converged:
        return {"converged": False, "message": res.message}
    d = {
        "converged": True,
        "losses_kw": float(res.losses_kw),
        "v_min": float(res.v_mag[res.energized].min()),
        "balance": float(power_balance_error(res, view.net)),
        "iterations": res.iterations,
        "max_dv": 0.0,
        "loss_rel": 0.0,
    }
    if ref is not None and ref.converged:
        d["max_dv"] = float(np.max(np.abs(res.v_mag - ref.v_mag)))
        d["loss_rel"] = float(abs(res.losses_kw - ref.losses_kw) / max(abs(ref.losses_kw), 1e-12))
    return d


def cross_engine(view, opts: PFOptions) -> dict[str, tuple[PowerFlowResult, dict]]:
    """Newton-Raphson reference plus both radial engines, called directly (no fallback)."""
    nr = solve(view, replace(opts, engine=NEWTON_RAPHSON))
    out = {NEWTON_RAPHSON: (nr, _engine_entry(nr, None, view))}
    for name, fn in ((DISTFLOW_FULL, distflow_sweep), (DIRECT_LOAD_FLOW, direct_load_flow)):
        res = fn(view, replace(opts, engine=name))
        out[name] = (res, _engine_entry(res, nr, view))
    return out


def validate(fx: CaseFixture, opts: PFOptions = PFOptions(tol=1e-8)) -> ValidateReport:
    """Fixture diagnostics and invariant checks for the default ties."""
    net = fx.network
    view = apply_configuration(net, fx.default_ties)
    counts = {
        "buses": net.n_bus,
        "branches": net.n_branch,
        "ties": len(fx.default_ties),
        "switchable": sum(1 for b in net.branches if b.switchable),
        "loads": sum(1 for b in net.buses if b.p_load or b.q_load),
        "generators": sum(1 for b in net.buses if b.kind != PQ or b.p_gen or b.q_gen),
        "slacks": len(net.slack_buses),
        "grid_connections": net.n_con,
    }
    closed = len(view.closed)
    radial = view.is_radial
    loops = closed - (net.n_bus - net.n_con)
    g = WeightedGraph.from_network(net)
    n_trees = count_spanning_trees(g)
    checks = [
        Check("default ties are branches of the case", all(0 <= k < net.n_branch for k in fx.default_ties.open_branches)),
        Check("default configuration energizes every bus", bool(view.energized.all())),
        Check(
            "radiality matches the closed-branch count",
            radial == (closed == net.n_bus - net.n_con and view.is_connected),
            f"{closed} closed, {net.n_bus} buses, {net.n_con} slack groups",
        ),
        Check("at least one spanning tree", n_trees > 0, str(n_trees)),
    ]
    engines: dict = {}
    if radial:
        results = cross_engine(view, opts)
        nr = results[NEWTON_RAPHSON][0]
        checks.append(Check("newton_raphson converges", nr.converged, nr.message))
        for name, (res, entry) in results.items():
            engines[name] = entry
            if not res.converged:
                if name != NEWTON_RAPHSON:
                    checks.append(Check(f"{name} converges", False, res.message, "warning"))
                continue
            checks.append(Check(f"{name} power balance", entry["balance"] < BALANCE_TOL, f"{entry['balance']:.2e} pu"))
            if name != NEWTON_RAPHSON and nr.converged:
                agree = entry["max_dv"] < V_AGREE and entry["loss_rel"] < LOSS_AGREE
                checks.append(
                    Check(f"{name} agrees with newton_raphson", agree, f"dV {entry['max_dv']:.2e}, losses {entry['loss_rel']:.2e}")
                )
    else:
        nr = solve(view, replace(opts, engine=NEWTON_RAPHSON))
        engines[NEWTON_RAPHSON] = _engine_entry(nr, None, view)
        checks.append(Check("newton_raphson converges", nr.converged, nr.message))
        if nr.converged:
            bal = engines[NEWTON_RAPHSON]["balance"]
            checks.append(Check("newton_raphson power balance", bal < BALANCE_TOL, f"{bal:.2e} pu"))
    return ValidateReport(fx.name, counts, radial, loops, n_trees, engines, checks)
