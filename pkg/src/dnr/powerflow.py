"""Power-flow engines.

Four interchangeable solvers share one result type:

* ``newton_raphson``: polar Newton-Raphson on the bus admittance matrix;
  handles meshed networks and PV buses.
* ``distflow_full``: backward/forward sweep of the branch-flow (DistFlow)
  equations on a radial view.
* ``distflow_simplified``: one lossless pass of the same equations, losses
  evaluated at 1 pu.
* ``direct_load_flow``: BIBC/BCBV matrix iteration on a radial view.

Branches use the pi model (series r + jx, charging b split between ends);
transformer tap ratios are not modelled. Loads are constant power.
"""

from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .network import PV, SLACK, Network, NetworkView, NotRadialError, as_view

log = logging.getLogger(__name__)

NEWTON_RAPHSON = "newton_raphson"
DISTFLOW_FULL = "distflow_full"
DISTFLOW_SIMPLIFIED = "distflow_simplified"
DIRECT_LOAD_FLOW = "direct_load_flow"
ENGINES = (NEWTON_RAPHSON, DISTFLOW_FULL, DISTFLOW_SIMPLIFIED, DIRECT_LOAD_FLOW)
RADIAL_ENGINES = (DISTFLOW_FULL, DISTFLOW_SIMPLIFIED, DIRECT_LOAD_FLOW)
DENSE_LIMIT = 400  # below this many buses dense linear algebra is faster


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class PFOptions:
    """Solver selection and stopping rule.

    ``max_iter`` of None means 50 for Newton-Raphson and 100 sweeps for
    the radial engines. ``tol`` is a power mismatch (NR) or a voltage
    change between sweeps (radial engines), both in pu.
    """

    engine: str = NEWTON_RAPHSON
    tol: float = 1e-6
    max_iter: int | None = None
    flat_start: bool = True

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def iterations(self, engine: str) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 50 if engine == NEWTON_RAPHSON else 100


@dataclass
class PFCounter:
    """Counts completed power-flow solves (the NPF metric)."""

    calls: int = 0

    def tick(self, n: int = 1) -> None:
        self.calls += n

    def merge(self, other: PFCounter) -> None:
        self.calls += other.calls


@dataclass
class PowerFlowResult:
    """Solved state.

    Per-branch arrays are indexed by branch id and hold zeros for open
    branches. Flows are from-end values in MW / MVAr; ``branch_current`` is
    the series current magnitude in pu.
    """

    v_mag: np.ndarray
    v_ang: np.ndarray
    branch_current: np.ndarray
    branch_p: np.ndarray
    branch_q: np.ndarray
    branch_p_to: np.ndarray
    branch_q_to: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    losses_kw: float
    converged: bool
    iterations: int
    engine: str
    energized: np.ndarray
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


# -- shared bookkeeping -----------------------------------------------------


def bus_injections(view: NetworkView) -> tuple[np.ndarray, np.ndarray]:
    """Scheduled net injection and shunt admittance (with line charging) per bus, pu."""
    net = view.net
    s_spec = np.array([complex(b.p_gen - b.p_load, b.q_gen - b.q_load) for b in net.buses]) / net.s_base
    y_sh = np.array([complex(b.g_shunt, b.b_shunt) for b in net.buses]) / net.s_base
    for k in view.closed:
        br = net.branches[k]
        if br.b:
            y_sh[br.from_bus] += 0.5j * br.b
            y_sh[br.to_bus] += 0.5j * br.b
    return s_spec, y_sh


def _v_setpoints(net: Network) -> np.ndarray:
    return np.array([b.v_set if b.kind in (SLACK, PV) else 1.0 for b in net.buses])


def _initial_voltage(view: NetworkView, opts: PFOptions, v0: np.ndarray | None) -> np.ndarray:
    net = view.net
    if v0 is not None and not opts.flat_start:
        v = np.asarray(v0, dtype=complex).copy()
        v[v == 0] = 1.0
    else:
        v = np.ones(net.n_bus, dtype=complex)
    for b in net.buses:
        if b.kind == SLACK:
            v[b.id] = b.v_set
        elif b.kind == PV:
            v[b.id] = b.v_set * v[b.id] / abs(v[b.id])
    return v


def _finalize(
    view: NetworkView,
    v: np.ndarray,
    converged: bool,
    iterations: int,
    engine: str,
    message: str = "",
) -> PowerFlowResult:
    net = view.net
    energized = view.energized
    v = np.where(energized, v, 0.0)
    nb = net.n_branch
    current = np.zeros(nb)
    p_f, q_f, p_t, q_t = (np.zeros(nb) for _ in range(4))
    losses = 0.0
    for k in view.closed:
        br = net.branches[k]
        vf, vt = v[br.from_bus], v[br.to_bus]
        i_s = (vf - vt) / br.z
        sf = vf * np.conj(i_s + 0.5j * br.b * vf)
        st = vt * np.conj(-i_s + 0.5j * br.b * vt)
        current[k] = abs(i_s)
        p_f[k], q_f[k], p_t[k], q_t[k] = sf.real, sf.imag, st.real, st.imag
        losses += abs(i_s) ** 2 * br.r
    s_sh = np.array([complex(b.g_shunt, -b.b_shunt) for b in net.buses]) / net.s_base * np.abs(v) ** 2
    s_inj = np.zeros(net.n_bus, dtype=complex)
    np.add.at(s_inj, [net.branches[k].from_bus for k in view.closed], p_f[list(view.closed)] + 1j * q_f[list(view.closed)])
    np.add.at(s_inj, [net.branches[k].to_bus for k in view.closed], p_t[list(view.closed)] + 1j * q_t[list(view.closed)])
    s_inj = s_inj + s_sh
    base = net.s_base
    return PowerFlowResult(
        v_mag=np.abs(v),
        v_ang=np.where(energized, np.angle(v), 0.0),
        branch_current=current,
        branch_p=p_f * base,
        branch_q=q_f * base,
        branch_p_to=p_t * base,
        branch_q_to=q_t * base,
        p_inj=s_inj.real * base,
        q_inj=s_inj.imag * base,
        losses_kw=float(losses * base * 1e3),
        converged=converged,
        iterations=iterations,
        engine=engine,
        energized=energized.copy(),
        message=message,
    )


def _failed(view: NetworkView, engine: str, iterations: int, message: str) -> PowerFlowResult:
    n, nb = view.net.n_bus, view.net.n_branch
    z = np.zeros
    return PowerFlowResult(
        z(n), z(n), z(nb), z(nb), z(nb), z(nb), z(nb), z(n), z(n),
        float("nan"), False, iterations, engine, view.energized.copy(), message,
    )


# -- Newton-Raphson -----------------------------------------------------------


def _ybus(view: NetworkView, idx: np.ndarray, y_sh: np.ndarray) -> sp.csr_matrix:
    net = view.net
    pos = -np.ones(net.n_bus, dtype=int)
    pos[idx] = np.arange(len(idx))
    rows, cols, vals = [], [], []
    for k in view.closed:
        br = net.branches[k]
        f, t = pos[br.from_bus], pos[br.to_bus]
        if f < 0 or t < 0:
            continue
        y = 1.0 / br.z
        rows += [f, t, f, t]
        cols += [f, t, t, f]
        vals += [y, y, -y, -y]
    rows += list(range(len(idx)))
    cols += list(range(len(idx)))
    vals += list(y_sh[idx])
    n = len(idx)
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n))


def _dsbus_dv_dense(y: np.ndarray, v: np.ndarray):
    i_bus = y @ v
    vn = v / np.abs(v)
    ds_dvm = v[:, None] * np.conj(y * vn[None, :]) + np.diag(np.conj(i_bus) * vn)
    ds_dva = 1j * v[:, None] * np.conj(np.diag(i_bus) - y * v[None, :])
    return ds_dvm, ds_dva


def _dsbus_dv(y: sp.csr_matrix, v: np.ndarray):
    i_bus = y @ v
    diag_v = sp.diags(v)
    diag_i = sp.diags(i_bus)
    diag_vn = sp.diags(v / np.abs(v))
    ds_dvm = diag_v @ np.conj(y @ diag_vn) + np.conj(diag_i) @ diag_vn
    ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
    return ds_dvm, ds_dva


def newton_raphson(
    view: Network | NetworkView,
    opts: PFOptions = PFOptions(),
    counter: PFCounter | None = None,
    v0: np.ndarray | None = None,
) -> PowerFlowResult:
    """Full AC power flow; de-energized buses are left at zero voltage."""
    view = as_view(view)
    net = view.net
    s_spec, y_sh = bus_injections(view)
    v_full = _initial_voltage(view, opts, v0)
    idx = np.flatnonzero(view.energized)
    kinds = np.array([net.buses[i].kind for i in idx])
    ybus = _ybus(view, idx, y_sh)
    dense = len(idx) <= DENSE_LIMIT
    if dense:
        ybus = ybus.toarray()
    v = v_full[idx]
    s = s_spec[idx]
    pv = np.flatnonzero(kinds == PV)
    pq = np.flatnonzero((kinds != PV) & (kinds != SLACK))
    pvpq = np.r_[pv, pq]
    n_pvpq, n_pq = len(pvpq), len(pq)
    max_iter = opts.iterations(NEWTON_RAPHSON)

    def mismatch(v):
        mis = v * np.conj(ybus @ v) - s
        return np.r_[mis[pvpq].real, mis[pq].imag]

    f = mismatch(v)
    it = 0
    converged = f.size == 0 or np.max(np.abs(f)) < opts.tol
    message = ""
    while not converged and it < max_iter:
        it += 1
        if dense:
            ds_dvm, ds_dva = _dsbus_dv_dense(ybus, v)
            jac = np.block(
                [
                    [ds_dva[np.ix_(pvpq, pvpq)].real, ds_dvm[np.ix_(pvpq, pq)].real],
                    [ds_dva[np.ix_(pq, pvpq)].imag, ds_dvm[np.ix_(pq, pq)].imag],
                ]
            )
        else:
            ds_dvm, ds_dva = _dsbus_dv(ybus, v)
            j11 = ds_dva[pvpq][:, pvpq].real
            j12 = ds_dvm[pvpq][:, pq].real
            j21 = ds_dva[pq][:, pvpq].imag
            j22 = ds_dvm[pq][:, pq].imag
            jac = sp.vstack([sp.hstack([j11, j12]), sp.hstack([j21, j22])], format="csc")
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                dx = -(np.linalg.solve(jac, f) if dense else spsolve(jac, f))
            except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
                message = f"singular Jacobian: {exc}"
                break
        if not np.all(np.isfinite(dx)):
            message = "singular Jacobian"
            break
        va, vm = np.angle(v), np.abs(v)
        va[pvpq] += dx[:n_pvpq]
        vm[pq] += dx[n_pvpq : n_pvpq + n_pq]
        v = vm * np.exp(1j * va)
        f = mismatch(v)
        if not np.all(np.isfinite(f)) or np.max(np.abs(f)) > 1e10:
            message = "diverged"
            break
        converged = np.max(np.abs(f)) < opts.tol
    if not converged and not message:
        message = f"no convergence in {max_iter} iterations"
    v_full = np.zeros(net.n_bus, dtype=complex)
    v_full[idx] = v
    res = _finalize(view, v_full, bool(converged), it, NEWTON_RAPHSON, message)
    if counter is not None:
        counter.tick()
    return res


# -- radial engines -------------------------------------------------------------


def _require_forest(view: NetworkView):
    forest = view.forest
    if forest is None:
        loop = find_loop(view)
        names = ", ".join(view.net.branches[k].name for k in loop)
        raise NotRadialError(f"radial engine needs a radial network; loop through {names}")
    return forest


def find_loop(view: NetworkView) -> list[int]:
    """Branch ids of one cycle in the view; slacks count as joined through the grid."""
    net = view.net
    n = net.n_bus
    grid = n
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n + 1)]
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s in net.slack_buses:
        parent[find(s)] = find(grid)
        adj[s].append((grid, -1))
        adj[grid].append((s, -1))
    for k in view.closed:
        br = net.branches[k]
        a, b = find(br.from_bus), find(br.to_bus)
        if a == b:
            path = _bfs_path(adj, br.from_bus, br.to_bus)
            return [k] + [e for e in path if e >= 0]
        parent[a] = b
        adj[br.from_bus].append((br.to_bus, k))
        adj[br.to_bus].append((br.from_bus, k))
    return []


def _bfs_path(adj, src: int, dst: int) -> list[int]:
    prev = {src: (None, None)}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for w, k in adj[u]:
            if w not in prev:
                prev[w] = (u, k)
                queue.append(w)
    path = []
    while prev[dst][0] is not None:
        dst, k = prev[dst]
        path.append(k)
    return path


def _consumption(s_spec: np.ndarray, y_sh: np.ndarray, v: np.ndarray) -> np.ndarray:
    return -s_spec + np.conj(y_sh) * np.abs(v) ** 2


def _pv_sensitivity(view: NetworkView, forest, pv: list[int]) -> np.ndarray:
    """Reactance of the path shared by each pair of PV buses back to their root, pu."""
    x = np.array([br.x for br in view.net.branches])
    paths = [set(forest.path_to_root(i)) for i in pv]
    m = np.zeros((len(pv), len(pv)))
    for a in range(len(pv)):
        for b in range(a, len(pv)):
            m[a, b] = m[b, a] = sum(x[k] for k in paths[a] & paths[b])
    return m


def _pv_compensated(view: NetworkView, forest, opts: PFOptions, engine: str, s_spec: np.ndarray, v: np.ndarray, inner):
    """Hold PV voltage magnitudes in a radial engine.

    ``inner(s, v, n)`` runs up to ``n`` iterations with PV buses treated as
    PQ and returns ``(v, converged, iterations)``. With PV buses present the
    reactive injection at each of them is corrected after every iteration
    by ``dQ = X^-1 dV``, with ``X`` the shared-path reactance matrix.
    """
    net = view.net
    pv = [b.id for b in net.buses if b.kind == PV and view.energized[b.id]]
    if not pv:
        return inner(s_spec, v, opts.iterations(engine))
    x_pv = _pv_sensitivity(view, forest, pv)
    v_set = np.array([net.buses[i].v_set for i in pv])
    s = s_spec.copy()
    for it in range(1, opts.iterations(engine) + 1):
        v, settled, _ = inner(s, v, 1)
        if not np.all(np.isfinite(v)):
            return v, False, it
        dv = v_set - np.abs(v[pv])
        if settled and np.max(np.abs(dv)) < opts.tol:
            return v, True, it
        s[pv] += 1j * np.linalg.solve(x_pv, dv)
    return v, False, it


def distflow_sweep(
    view: Network | NetworkView,
    opts: PFOptions = PFOptions(engine=DISTFLOW_FULL),
    counter: PFCounter | None = None,
    v0: np.ndarray | None = None,
) -> PowerFlowResult:
    """Backward/forward DistFlow sweep.

    Full mode iterates until the largest voltage change between sweeps is
    below ``opts.tol``; PV buses are held by reactive compensation.
    ``opts.engine == "distflow_simplified"`` makes a single lossless pass
    (PQ buses only) and reports losses computed at 1 pu voltage.
    """
    view = as_view(view)
    forest = _require_forest(view)
    net = view.net
    simplified = opts.engine == DISTFLOW_SIMPLIFIED
    if simplified and any(net.buses[b].kind == PV for b in forest.order):
        raise PowerFlowError("the simplified DistFlow pass cannot hold PV voltages")
    s_spec, y_sh = bus_injections(view)
    order = forest.order
    parent = forest.parent
    pbranch = forest.parent_branch
    z = np.array([br.z for br in net.branches])
    s_send = np.zeros(net.n_branch, dtype=complex)
    engine = DISTFLOW_SIMPLIFIED if simplified else DISTFLOW_FULL

    def sweeps(s: np.ndarray, v: np.ndarray, max_iter: int):
        if simplified:
            max_iter = 1
        it = 0
        while it < max_iter:
            it += 1
            s_recv = _consumption(s, y_sh, np.ones(net.n_bus) if simplified else v)
            s_send[:] = 0.0
            for j in order[::-1]:
                k = pbranch[j]
                if k < 0:
                    continue
                if simplified:
                    s_send[k] = s_recv[j]
                else:
                    s_send[k] = s_recv[j] + z[k] * abs(s_recv[j]) ** 2 / abs(v[j]) ** 2
                s_recv[parent[j]] += s_send[k]
            v_new = v.copy()
            for j in order:
                i = parent[j]
                if i < 0:
                    continue
                k = pbranch[j]
                if simplified:
                    vsq = abs(v_new[i]) ** 2 - 2 * (z[k].real * s_send[k].real + z[k].imag * s_send[k].imag)
                    ang = np.angle(v_new[i]) - (z[k].imag * s_send[k].real - z[k].real * s_send[k].imag) / abs(v_new[i]) ** 2
                    v_new[j] = np.sqrt(max(vsq, 0.0)) * np.exp(1j * ang)
                else:
                    v_new[j] = v_new[i] - z[k] * np.conj(s_send[k] / v_new[i])
            delta = np.max(np.abs(v_new - v)) if net.n_bus else 0.0
            v = v_new
            if not np.all(np.isfinite(v)):
                return v, False, it
            if simplified or delta < opts.tol:
                return v, True, it
        return v, False, it

    v = _initial_voltage(view, opts, v0)
    with np.errstate(all="ignore"):
        v, converged, it = _pv_compensated(view, forest, opts, engine, s_spec, v, sweeps)
    if not converged:
        if counter is not None:
            counter.tick()
        return _failed(view, engine, it, "sweep did not converge")
    res = _finalize(view, v, converged, it, engine)
    if simplified:
        # lossless flows, losses at 1 pu
        r = z.real
        losses = float(sum(r[k] * abs(s_send[k]) ** 2 for k in view.closed))
        res.losses_kw = losses * net.s_base * 1e3
        res.extra["flows"] = s_send * net.s_base
    if counter is not None:
        counter.tick()
    return res


def bibc_matrix(view: NetworkView) -> tuple[np.ndarray, np.ndarray]:
    """Bus-injection to branch-current matrix of a radial view.

    Returns (BIBC, branch ids): row r gives the branch-current contribution
    of each bus injection for ``branch_ids[r]``, oriented away from the root.
    """
    forest = _require_forest(view)
    n = view.net.n_bus
    tree_buses = [j for j in forest.order if forest.parent[j] >= 0]
    row_of = {j: r for r, j in enumerate(tree_buses)}
    bibc = np.zeros((len(tree_buses), n))
    # walk children before parents so subtree membership accumulates upward
    for j in forest.order[::-1]:
        if forest.parent[j] < 0:
            continue
        r = row_of[j]
        bibc[r, j] = 1.0
        p = forest.parent[j]
        if forest.parent[p] >= 0:
            bibc[row_of[p]] += bibc[r]
    return bibc, np.array([forest.parent_branch[j] for j in tree_buses], dtype=int)


def direct_load_flow(
    view: Network | NetworkView,
    opts: PFOptions = PFOptions(engine=DIRECT_LOAD_FLOW),
    counter: PFCounter | None = None,
    v0: np.ndarray | None = None,
) -> PowerFlowResult:
    """BIBC/BCBV iteration ``V = V_root - BCBV @ BIBC @ I``; PV buses held by reactive compensation."""
    view = as_view(view)
    forest = _require_forest(view)
    net = view.net
    bibc, branch_ids = bibc_matrix(view)
    z = np.array([net.branches[k].z for k in branch_ids])
    bcbv = bibc.T * z  # (n_bus, n_tree_branches)
    dlf = bcbv @ bibc
    s_spec, y_sh = bus_injections(view)
    v = _initial_voltage(view, opts, v0)
    root_v = np.zeros(net.n_bus, dtype=complex)
    energized = forest.root >= 0
    root_v[energized] = v[forest.root[energized]]

    def iterate(s: np.ndarray, v: np.ndarray, max_iter: int):
        it = 0
        while it < max_iter:
            it += 1
            safe = np.where(energized, v, 1.0)
            current = np.where(energized, np.conj(_consumption(s, y_sh, safe) / safe), 0.0)
            v_new = np.where(energized, root_v - dlf @ current, 0.0)
            delta = np.max(np.abs(v_new - v)[energized]) if energized.any() else 0.0
            v = v_new
            if not np.all(np.isfinite(v)):
                return v, False, it
            if delta < opts.tol:
                return v, True, it
        return v, False, it

    with np.errstate(all="ignore"):
        v, converged, it = _pv_compensated(view, forest, opts, DIRECT_LOAD_FLOW, s_spec, v, iterate)
    if not converged:
        if counter is not None:
            counter.tick()
        return _failed(view, DIRECT_LOAD_FLOW, it, "iteration did not converge")
    res = _finalize(view, v, converged, it, DIRECT_LOAD_FLOW)
    if counter is not None:
        counter.tick()
    return res


_DISPATCH = {
    NEWTON_RAPHSON: newton_raphson,
    DISTFLOW_FULL: distflow_sweep,
    DISTFLOW_SIMPLIFIED: distflow_sweep,
    DIRECT_LOAD_FLOW: direct_load_flow,
}


def solve(
    view: Network | NetworkView,
    opts: PFOptions = PFOptions(),
    counter: PFCounter | None = None,
    v0: np.ndarray | None = None,
) -> PowerFlowResult:
    """Run the engine named in ``opts``.

    Radial engines cannot solve meshed views, and the simplified DistFlow
    pass cannot hold PV voltages; such requests go to Newton-Raphson. A
    radial engine that fails on a network with PV buses is retried with
    Newton-Raphson too. Every fallback is logged and its reason stored in
    ``result.extra["fallback"]``; the attempt counts as one solve.
    """
    view = as_view(view)
    engine = opts.engine
    reason = None
    if engine in RADIAL_ENGINES:
        if view.forest is None:
            reason = "meshed network"
        elif engine == DISTFLOW_SIMPLIFIED and view.net.has_pv:
            reason = "PV buses present"
        else:
            res = _DISPATCH[engine](view, opts, None, v0)
            if res.converged or not view.net.has_pv:
                if counter is not None:
                    counter.tick()
                return res
            reason = f"{engine} did not converge with PV buses present"
    else:
        return _DISPATCH[engine](view, opts, counter, v0)
    log.debug("%s -> newton_raphson (%s)", engine, reason)
    res = newton_raphson(view, PFOptions(NEWTON_RAPHSON, opts.tol, opts.max_iter, opts.flat_start), counter, v0)
    res.extra["fallback"] = reason
    return res


def total_losses(res: PowerFlowResult, view: Network | NetworkView) -> float:
    """Sum of I^2 R over closed branches, kW."""
    if not res.converged:
        raise PowerFlowError("losses of a non-converged power flow are undefined")
    view = as_view(view)
    r = np.array([br.r for br in view.net.branches])
    if res.engine == DISTFLOW_SIMPLIFIED:
        return res.losses_kw
    return float(np.sum(res.branch_current**2 * r) * view.net.s_base * 1e3)


def voltage_extrema(res: PowerFlowResult) -> tuple[float, float]:
    """(v_min, v_max) over energized buses."""
    if not res.converged:
        raise PowerFlowError("voltage extrema of a non-converged power flow are undefined")
    vm = res.v_mag[res.energized]
    return float(vm.min()), float(vm.max())


def power_balance_error(res: PowerFlowResult, net: Network) -> float:
    """|generation + slack injection - load - shunt use - losses| in pu."""
    gen = sum(b.p_gen for b in net.buses if b.kind != SLACK and res.energized[b.id])
    slack = sum(res.p_inj[b.id] for b in net.buses if b.kind == SLACK)
    load = sum(b.p_load for b in net.buses if res.energized[b.id])
    shunt = sum(b.g_shunt * res.v_mag[b.id] ** 2 for b in net.buses)
    return abs(gen + slack - load - shunt - res.losses_kw / 1e3) / net.s_base
