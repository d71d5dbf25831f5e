"""Heuristic reconfiguration methods.

Every method returns a :class:`Solution` whose configuration has been
checked for radiality. NPF counts completed power-flow solves, including
the ones whose outcome was rejected.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .graphs import KRUSKAL, WeightedGraph, count_spanning_trees, enumerate_spanning_trees, minimum_spanning_tree
from .network import Network, NotRadialError, SwitchConfiguration, apply_configuration, tree_path
from .powerflow import (
    DIRECT_LOAD_FLOW,
    PFCounter,
    PFOptions,
    PowerFlowResult,
    bus_injections,
    solve,
    voltage_extrema,
)

LINE_CURRENT = "line_current"
ACTIVE_POWER = "active_power"
IMPEDANCE = "impedance"
MST_WEIGHTS = (LINE_CURRENT, ACTIVE_POWER, IMPEDANCE)


class SolverError(RuntimeError):
    """A method could not produce a solution; ``trace`` holds the steps taken."""

    def __init__(self, message: str, trace: list | None = None, npf: int = 0) -> None:
        super().__init__(message)
        self.trace = trace or []
        self.npf = npf


class SolverRefusal(SolverError):
    """The method declined to run (for example, too many spanning trees)."""


@dataclass
class Solution:
    config: SwitchConfiguration
    open_names: tuple[str, ...]
    losses_kw: float
    v_min: float
    v_max: float
    npf: int
    wall_ms: float
    method: str
    trace: list[dict] = field(default_factory=list)
    result: PowerFlowResult | None = field(default=None, repr=False, compare=False)


def run_pf(net: Network, cfg: SwitchConfiguration, opts: PFOptions, counter: PFCounter) -> PowerFlowResult:
    return solve(apply_configuration(net, cfg), opts, counter)


def _usable(res: PowerFlowResult) -> bool:
    return res.converged and bool(res.energized.all()) and np.isfinite(res.losses_kw)


def finish(
    net: Network,
    cfg: SwitchConfiguration,
    res: PowerFlowResult,
    npf: int,
    t0: float,
    method: str,
    trace: list[dict],
) -> Solution:
    """Package a final state; refuses non-radial or unsolved configurations."""
    view = apply_configuration(net, cfg)
    if not view.is_radial:
        raise SolverError(f"{method} produced a non-radial configuration", trace, npf)
    if not res.converged:
        raise SolverError(f"{method}: final power flow did not converge ({res.message})", trace, npf)
    v_min, v_max = voltage_extrema(res)
    return Solution(
        config=cfg,
        open_names=tuple(net.names_of(cfg)),
        losses_kw=float(res.losses_kw),
        v_min=v_min,
        v_max=v_max,
        npf=npf,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        method=method,
        trace=trace,
        result=res,
    )


def _require_radial(net: Network, cfg: SwitchConfiguration, method: str) -> None:
    if not apply_configuration(net, cfg).is_radial:
        raise NotRadialError(f"{method} needs a radial start configuration")


# -- Merlin -------------------------------------------------------------------


def merlin_loop_cutting(net: Network, opts: PFOptions = PFOptions()) -> Solution:
    """Open the lowest-current branch that keeps every bus fed, re-solve, repeat.

    Each trial opening is solved; a trial that leaves buses de-energized is
    undone and its branch is never tried again (once a bridge, always a
    bridge as more branches open). Ties on current go to the lower id.
    """
    t0 = time.perf_counter()
    counter = PFCounter()
    cfg = SwitchConfiguration()
    res = run_pf(net, cfg, opts, counter)
    trace: list[dict] = [{"step": 0, "action": "solve", "losses_kw": res.losses_kw}]
    if not res.converged:
        raise SolverError(f"merlin: all-closed power flow failed ({res.message})", trace, counter.calls)
    target = net.n_branch - (net.n_bus - net.n_con)
    bridges: set[int] = set()
    while len(cfg) < target:
        candidates = sorted(
            (res.branch_current[k], k)
            for k in apply_configuration(net, cfg).closed
            if net.branches[k].switchable and k not in bridges
        )
        accepted = False
        for _, k in candidates:
            trial = SwitchConfiguration(cfg.open_branches | {k})
            trial_res = run_pf(net, trial, opts, counter)
            name = net.branches[k].name
            if not trial_res.energized.all():
                bridges.add(k)
                trace.append({"step": len(trace), "action": "reject", "branch": name, "reason": "disconnects"})
                continue
            if not trial_res.converged:
                trace.append({"step": len(trace), "action": "abort", "branch": name, "reason": trial_res.message})
                raise SolverError(f"merlin: power flow diverged after opening {name}", trace, counter.calls)
            cfg, res = trial, trial_res
            trace.append({"step": len(trace), "action": "open", "branch": name, "losses_kw": res.losses_kw})
            accepted = True
            break
        if not accepted:
            raise SolverError("merlin: no branch can be opened without disconnecting buses", trace, counter.calls)
    return finish(net, cfg, res, counter.calls, t0, "merlin", trace)


# -- Baran ----------------------------------------------------------------------


def _downstream_flows(net: Network, res: PowerFlowResult, forest) -> np.ndarray:
    """Complex power entering each tree branch at its parent end, pu."""
    s = np.zeros(net.n_branch, dtype=complex)
    for j in forest.order:
        k = forest.parent_branch[j]
        if k < 0:
            continue
        if net.branches[k].from_bus == forest.parent[j]:
            s[k] = complex(res.branch_p[k], res.branch_q[k])
        else:
            s[k] = complex(res.branch_p_to[k], res.branch_q_to[k])
    return s / net.s_base


def _up_path(forest, a: int, b: int) -> tuple[list[int], list[int]]:
    """Branches from ``a`` and from ``b`` up to their meeting point (the grid for different roots)."""
    pa, pb = [], []
    if forest.root[a] != forest.root[b]:
        return forest.path_to_root(a), forest.path_to_root(b)
    while forest.depth[a] > forest.depth[b]:
        pa.append(int(forest.parent_branch[a]))
        a = int(forest.parent[a])
    while forest.depth[b] > forest.depth[a]:
        pb.append(int(forest.parent_branch[b]))
        b = int(forest.parent[b])
    while a != b:
        pa.append(int(forest.parent_branch[a]))
        pb.append(int(forest.parent_branch[b]))
        a, b = int(forest.parent[a]), int(forest.parent[b])
    return pa, pb


def exchange_estimates(net: Network, cfg: SwitchConfiguration, res: PowerFlowResult) -> list[tuple[float, int, int]]:
    """Estimated loss change (kW) of every single branch exchange.

    Returns (delta_kw, tie, branch) for closing open switch ``tie`` and
    opening switchable ``branch`` on its loop. Flows are treated as lossless
    and voltages as 1 pu, so the change in sum r (P^2 + Q^2) is closed form.
    """
    view = apply_configuration(net, cfg)
    forest = view.forest
    if forest is None:
        raise NotRadialError("exchange estimates need a radial configuration")
    s = _downstream_flows(net, res, forest)
    r = np.array([br.r for br in net.branches])
    out = []
    for t in cfg.key():
        br_t = net.branches[t]
        if not br_t.switchable:
            continue
        side_a, side_b = _up_path(forest, br_t.from_bus, br_t.to_bus)
        sum_a = complex(np.sum(r[side_a] * s[side_a].real), np.sum(r[side_a] * s[side_a].imag))
        sum_b = complex(np.sum(r[side_b] * s[side_b].real), np.sum(r[side_b] * s[side_b].imag))
        r_loop = r[side_a].sum() + r[side_b].sum() + br_t.r
        for own, own_sum, other_sum in ((side_a, sum_a, sum_b), (side_b, sum_b, sum_a)):
            for k in own:
                if not net.branches[k].switchable:
                    continue
                m = s[k]
                delta = (
                    2 * m.real * (other_sum.real - own_sum.real)
                    + 2 * m.imag * (other_sum.imag - own_sum.imag)
                    + r_loop * abs(m) ** 2
                )
                out.append((float(delta * net.s_base * 1e3), t, k))
    out.sort()
    return out


def baran_branch_exchange(
    net: Network,
    start: SwitchConfiguration,
    opts: PFOptions = PFOptions(),
    max_exchanges: int = 1000,
) -> Solution:
    """Branch exchange guided by the closed-form loss-change estimate.

    Each round ranks all exchanges by estimated loss change and confirms the
    best one with a power flow; if it does not actually lower losses, the
    next-best negative estimate is tried. Stops when no estimate is negative
    or none confirms.
    """
    t0 = time.perf_counter()
    _require_radial(net, start, "baran")
    counter = PFCounter()
    cfg = start
    res = run_pf(net, cfg, opts, counter)
    trace: list[dict] = [{"step": 0, "action": "solve", "losses_kw": res.losses_kw}]
    if not _usable(res):
        raise SolverError(f"baran: start configuration did not solve ({res.message})", trace, counter.calls)
    for _ in range(max_exchanges):
        accepted = False
        for delta, t, k in exchange_estimates(net, cfg, res):
            if delta >= 0:
                break
            trial = SwitchConfiguration((cfg.open_branches - {t}) | {k})
            trial_res = run_pf(net, trial, opts, counter)
            ok = _usable(trial_res) and trial_res.losses_kw < res.losses_kw
            trace.append(
                {
                    "step": len(trace),
                    "action": "exchange" if ok else "reject",
                    "close": net.branches[t].name,
                    "open": net.branches[k].name,
                    "estimate_kw": delta,
                    "losses_kw": trial_res.losses_kw if trial_res.converged else None,
                }
            )
            if ok:
                cfg, res = trial, trial_res
                accepted = True
                break
        if not accepted:
            break
    return finish(net, cfg, res, counter.calls, t0, "baran", trace)


# -- Salkuti --------------------------------------------------------------------


def salkuti_voltage_exchange(
    net: Network,
    start: SwitchConfiguration,
    opts: PFOptions = PFOptions(engine=DIRECT_LOAD_FLOW),
    v_eps: float = 1e-9,
    loss_slack: float = 1e-3,
) -> Solution:
    """Move each open point one branch toward the lower-voltage end of its tie.

    For every open switch the endpoint voltages are compared; the switch is
    closed and the loop branch adjacent to the lower-voltage endpoint is
    opened, shifting that endpoint onto the stronger feeder. The move is
    kept when losses fall, or when v_min rises while losses grow by at most
    ``loss_slack`` (relative). Passes repeat until one keeps no move.
    Endpoints within ``v_eps`` of each other are skipped.
    """
    t0 = time.perf_counter()
    _require_radial(net, start, "salkuti")
    counter = PFCounter()
    cfg = start
    res = run_pf(net, cfg, opts, counter)
    trace: list[dict] = [{"step": 0, "action": "solve", "losses_kw": res.losses_kw}]
    if not _usable(res):
        raise SolverError(f"salkuti: start configuration did not solve ({res.message})", trace, counter.calls)
    seen = {cfg.key()}
    changed = True
    while changed:
        changed = False
        for t in cfg.key():
            if t not in cfg.open_branches:
                continue
            br = net.branches[t]
            vf, vt = res.v_mag[br.from_bus], res.v_mag[br.to_bus]
            name = br.name
            if abs(vf - vt) <= v_eps:
                trace.append({"step": len(trace), "action": "skip", "tie": name, "reason": "equal voltages"})
                continue
            low, high = (br.from_bus, br.to_bus) if vf < vt else (br.to_bus, br.from_bus)
            forest = apply_configuration(net, cfg).forest
            path = tree_path(forest, low, high)
            if not path or not net.branches[path[0]].switchable:
                continue
            k = path[0]
            trial = SwitchConfiguration((cfg.open_branches - {t}) | {k})
            if trial.key() in seen:
                continue
            seen.add(trial.key())
            trial_res = run_pf(net, trial, opts, counter)
            better = False
            reason = "no improvement"
            if _usable(trial_res):
                if trial_res.losses_kw < res.losses_kw:
                    better, reason = True, "losses"
                elif (
                    trial_res.v_mag[trial_res.energized].min() > res.v_mag[res.energized].min()
                    and trial_res.losses_kw <= res.losses_kw * (1 + loss_slack)
                ):
                    better, reason = True, "v_min"
            trace.append(
                {
                    "step": len(trace),
                    "action": "exchange" if better else "reject",
                    "close": name,
                    "open": net.branches[k].name,
                    "reason": reason,
                    "losses_kw": trial_res.losses_kw if trial_res.converged else None,
                }
            )
            if better:
                cfg, res = trial, trial_res
                changed = True
    return finish(net, cfg, res, counter.calls, t0, "salkuti", trace)


# -- Montoya --------------------------------------------------------------------


def mst_weights(net: Network, res: PowerFlowResult, weight: str) -> np.ndarray:
    """Edge weights: inverse current or inverse active flow, or impedance magnitude."""
    if weight == LINE_CURRENT:
        return 1.0 / np.maximum(res.branch_current, 1e-12)
    if weight == ACTIVE_POWER:
        return 1.0 / np.maximum(np.abs(res.branch_p), 1e-12)
    if weight == IMPEDANCE:
        return np.array([abs(br.z) for br in net.branches])
    raise ValueError(f"unknown weight {weight!r}; choose from {MST_WEIGHTS}")


def montoya_mst(
    net: Network,
    opts: PFOptions = PFOptions(),
    weight: str = LINE_CURRENT,
    algo: str = KRUSKAL,
) -> Solution:
    """Spanning tree of the all-closed power flow, weighted so busy branches stay closed.

    NPF is 1: the solve of the resulting tree only reports its objectives.
    """
    t0 = time.perf_counter()
    counter = PFCounter()
    res = run_pf(net, SwitchConfiguration(), opts, counter)
    if not res.converged:
        raise SolverError(f"montoya: all-closed power flow failed ({res.message})", [], counter.calls)
    g = WeightedGraph.from_network(net, mst_weights(net, res, weight))
    tree = minimum_spanning_tree(g, algo)
    cfg = tree.to_config(g)
    final = run_pf(net, cfg, opts, PFCounter())
    trace = [{"step": 0, "action": "mst", "weight": weight, "algo": algo, "tree_weight": tree.weight}]
    return finish(net, cfg, final, counter.calls, t0, "montoya", trace)


# -- Morton -----------------------------------------------------------------------


class ConstantCurrentEvaluator:
    """Losses of a spanning tree with loads drawn as fixed currents at 1 pu."""

    def __init__(self, net: Network, g: WeightedGraph) -> None:
        s_spec, y_sh = bus_injections(net.all_closed())
        bus_current = np.conj(-s_spec + np.conj(y_sh))
        node_of = np.zeros(net.n_bus, dtype=int)
        slacks = set(net.slack_buses)
        nxt = 1 if slacks else 0
        for b in net.buses:
            if b.id in slacks:
                node_of[b.id] = 0
            else:
                node_of[b.id] = nxt
                nxt += 1
        loads = [b.id for b in net.buses if b.id not in slacks]
        self.node_current = np.zeros(g.n_nodes, dtype=complex)
        np.add.at(self.node_current, node_of[loads], bus_current[loads])
        self.g = g
        self.r = {e.id: net.branches[e.id].r for e in g.edges}
        self.scale = net.s_base * 1e3

    def losses_kw(self, edges) -> float:
        g = self.g
        adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n_nodes)]
        for k in edges:
            e = g.edge(k)
            adj[e.u].append((e.v, k))
            adj[e.v].append((e.u, k))
        order = [0]
        up = [-1] * g.n_nodes
        parent = [-1] * g.n_nodes
        parent[0] = 0
        for u in order:
            for v, k in adj[u]:
                if parent[v] < 0:
                    parent[v] = u
                    up[v] = k
                    order.append(v)
        acc = self.node_current.copy()
        total = 0.0
        for v in reversed(order[1:]):
            i = acc[v]
            total += self.r[up[v]] * (i.real * i.real + i.imag * i.imag)
            acc[parent[v]] += i
        return total * self.scale


def morton_brute_force(
    net: Network,
    opts: PFOptions = PFOptions(),
    limit: int = 1_000_000,
    recheck: int = 10,
) -> Solution:
    """Exhaustive search over every radial configuration.

    Each spanning tree is ranked by constant-current losses (one NPF each);
    the best ``recheck`` are solved with the full power flow and the lowest
    true loss wins, ties broken by configuration. Refuses when the tree
    count exceeds ``limit``.
    """
    t0 = time.perf_counter()
    g = WeightedGraph.from_network(net)
    n_trees = count_spanning_trees(g)
    if n_trees > limit:
        raise SolverRefusal(f"morton: {n_trees} spanning trees exceed the limit of {limit}")
    evaluator = ConstantCurrentEvaluator(net, g)
    counter = PFCounter()
    scored = []
    stream = enumerate_spanning_trees(g)
    for tree in stream:
        cfg = tree.to_config(g)
        scored.append((evaluator.losses_kw(tree.edges), cfg.key()))
        counter.tick()
    if stream.count != n_trees:
        raise SolverError(f"morton: enumerated {stream.count} trees, expected {n_trees}", [], counter.calls)
    scored.sort()
    best = None
    trace = [{"step": 0, "action": "enumerate", "trees": stream.count}]
    for estimate, key in scored[:recheck]:
        cfg = SwitchConfiguration.of(key)
        res = run_pf(net, cfg, opts, counter)
        trace.append(
            {
                "step": len(trace),
                "action": "recheck",
                "open": net.names_of(cfg),
                "estimate_kw": estimate,
                "losses_kw": res.losses_kw if _usable(res) else None,
            }
        )
        if _usable(res) and (best is None or (res.losses_kw, key) < (best[1].losses_kw, best[0].key())):
            best = (cfg, res)
    if best is None:
        raise SolverError("morton: no re-checked configuration solved", trace, counter.calls)
    return finish(net, best[0], best[1], counter.calls, t0, "morton", trace)
