"""Population-based reconfiguration: a hybrid genetic algorithm and selective binary PSO.

Both draw every random number from one seeded ``numpy`` generator in a
fixed order, so a run is reproducible from its parameters alone. Candidate
evaluations are cached by configuration; NPF counts distinct solves.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .graphs import WeightedGraph, minimum_spanning_tree
from .heuristics import Solution, SolverError, exchange_estimates, finish
from .network import Network, NetworkView, SwitchConfiguration, apply_configuration, fundamental_loops, tree_path
from .powerflow import PFCounter, PFOptions, PowerFlowResult, solve

log = logging.getLogger(__name__)

GA = "ga"
SBPSO = "sbpso"


@dataclass(frozen=True)
class FitnessSpec:
    """Weighted objective, higher is better.

    ``w_loss / (losses_kw / loss_norm + 1) + w_vmin * v_min / vmin_target``.
    With ``w_loss = 1`` this is the plain inverse-loss fitness.
    """

    w_loss: float = 1.0
    w_vmin: float | None = None
    loss_norm: float = 1.0
    vmin_target: float = 1.0

    def __post_init__(self) -> None:
        if self.w_vmin is None:
            object.__setattr__(self, "w_vmin", 1.0 - self.w_loss)
        if not (0.0 <= self.w_loss <= 1.0 and 0.0 <= self.w_vmin <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.w_loss + self.w_vmin - 1.0) > 1e-9:
            raise ValueError("w_loss + w_vmin must equal 1")
        if not (self.loss_norm > 0 and self.vmin_target > 0):
            raise ValueError("loss_norm and vmin_target must be positive")

    def score(self, losses_kw: float, v_min: float) -> float:
        value = 0.0
        if self.w_loss:
            value += self.w_loss / (losses_kw / self.loss_norm + 1.0)
        if self.w_vmin:
            value += self.w_vmin * v_min / self.vmin_target
        return value


@dataclass(frozen=True)
class Evaluation:
    value: float
    feasible: bool
    converged: bool = False
    losses_kw: float = math.nan
    v_min: float = math.nan

    def __float__(self) -> float:
        return self.value


class Evaluator:
    """Fitness with a per-run cache; the PF counter only sees distinct configurations."""

    def __init__(self, net: Network, spec: FitnessSpec, opts: PFOptions, counter: PFCounter | None = None) -> None:
        self.net = net
        self.spec = spec
        self.opts = opts
        self.counter = counter or PFCounter()
        self._cache: dict[tuple[int, ...], tuple[Evaluation, PowerFlowResult | None]] = {}

    def solve(self, cfg: SwitchConfiguration) -> tuple[Evaluation, PowerFlowResult | None]:
        key = cfg.key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        view = apply_configuration(self.net, cfg)
        if not view.is_radial:
            out = (Evaluation(0.0, False), None)
        else:
            out = _score(view, self.spec, self.opts, self.counter)
        self._cache[key] = out
        return out

    def __call__(self, cfg: SwitchConfiguration) -> Evaluation:
        return self.solve(cfg)[0]


def _score(view: NetworkView, spec: FitnessSpec, opts: PFOptions, counter: PFCounter):
    res = solve(view, opts, counter)
    if not (res.converged and np.isfinite(res.losses_kw)):
        return Evaluation(0.0, True, False), res
    v_min = float(res.v_mag[res.energized].min())
    return Evaluation(spec.score(res.losses_kw, v_min), True, True, float(res.losses_kw), v_min), res


def evaluate_fitness(
    net: Network,
    cfg: SwitchConfiguration,
    spec: FitnessSpec = FitnessSpec(),
    opts: PFOptions = PFOptions(),
    counter: PFCounter | None = None,
) -> Evaluation:
    """Fitness of one configuration; non-radial ones score 0 and are never solved."""
    view = apply_configuration(net, cfg)
    if not view.is_radial:
        return Evaluation(0.0, False)
    return _score(view, spec, opts, counter if counter is not None else PFCounter())[0]


# -- shared tree operators ------------------------------------------------------


def random_tree_config(g: WeightedGraph, rng: np.random.Generator, allowed=None) -> SwitchConfiguration:
    """Kruskal on uniform random weights, optionally restricted to ``allowed`` edges."""
    weights = rng.random(len(g.edges))
    wg = g.with_weights({e.id: float(w) for e, w in zip(g.edges, weights)})
    if allowed is not None:
        wg = wg.subgraph(allowed)
    tree = minimum_spanning_tree(wg)
    return SwitchConfiguration.of(k for k in g.edge_ids if k not in tree.edges)


def cycle_mutation(net: Network, cfg: SwitchConfiguration, rng: np.random.Generator) -> SwitchConfiguration:
    """Close one open switch and open another branch of the loop it creates."""
    ties = [k for k in cfg.key() if net.branches[k].switchable]
    if not ties:
        return cfg
    t = ties[int(rng.integers(len(ties)))]
    view = apply_configuration(net, cfg)
    br = net.branches[t]
    path = [k for k in tree_path(view.forest, br.from_bus, br.to_bus) if net.branches[k].switchable]
    if not path:
        return cfg
    k = path[int(rng.integers(len(path)))]
    return SwitchConfiguration((cfg.open_branches - {t}) | {k})


# -- genetic algorithm --------------------------------------------------------------


@dataclass(frozen=True)
class GAParams:
    n_pop: int = 50
    n_sbe: int = 5
    n_el: int = 10
    p_mut: float = 0.1
    n_iter: int = 50
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_pop < 2:
            raise ValueError("n_pop must be >= 2")
        if not 0 < self.n_el < self.n_pop:
            raise ValueError("need 0 < n_el < n_pop")
        if not 0 <= self.n_sbe <= self.n_pop:
            raise ValueError("need 0 <= n_sbe <= n_pop")
        if not 0.0 <= self.p_mut <= 1.0:
            raise ValueError("p_mut must lie in [0, 1]")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")


def sbea_seeds(
    ev: Evaluator, start: SwitchConfiguration, n: int, rng: np.random.Generator, max_steps: int = 200
) -> list[SwitchConfiguration]:
    """The last ``n`` configurations of a successive branch exchange run from ``start``.

    Each step takes the exchange with the best loss-change estimate that
    raises fitness, until none does. The list ends with that local optimum;
    if the path is shorter than ``n``, mutations of the optimum fill it.
    """
    if n == 0:
        return []
    path = [start]
    cfg = start
    evaluation, res = ev.solve(cfg)
    for _ in range(max_steps):
        if res is None or not evaluation.converged:
            break
        moved = False
        for delta, t, k in exchange_estimates(ev.net, cfg, res):
            if delta >= 0:
                break
            trial = SwitchConfiguration((cfg.open_branches - {t}) | {k})
            trial_eval, trial_res = ev.solve(trial)
            if trial_eval.value > evaluation.value:
                cfg, evaluation, res = trial, trial_eval, trial_res
                path.append(cfg)
                moved = True
                break
        if not moved:
            break
    seeds = path[-n:]
    while len(seeds) < n:
        seeds.append(cycle_mutation(ev.net, path[-1], rng))
    return seeds


def _rank(pop: list[SwitchConfiguration], ev: Evaluator) -> list[SwitchConfiguration]:
    return sorted(pop, key=lambda c: (-ev(c).value, c.key()))


def jakus_ga(
    net: Network,
    params: GAParams = GAParams(),
    spec: FitnessSpec = FitnessSpec(),
    opts: PFOptions = PFOptions(),
    warm_start: SwitchConfiguration | None = None,
    default_ties: SwitchConfiguration | None = None,
) -> Solution:
    """Genetic algorithm over spanning trees, seeded by branch exchange.

    The first population holds ``n_sbe`` branch-exchange seeds from
    ``warm_start`` (else ``default_ties``, else a random tree) and random
    Kruskal trees. Each generation keeps ``n_el`` elites and refills with
    children: the union of two elites' closed branches reduced to a random
    spanning tree, then a loop mutation with probability ``p_mut``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(params.rng_seed)
    g = WeightedGraph.from_network(net)
    ev = Evaluator(net, spec, opts)
    start = warm_start if warm_start is not None else default_ties
    if start is None or not apply_configuration(net, start).is_radial:
        start = random_tree_config(g, rng)
    pop = sbea_seeds(ev, start, params.n_sbe, rng)
    while len(pop) < params.n_pop:
        pop.append(random_tree_config(g, rng))
    pop = _rank(pop, ev)
    trace = [_generation(0, pop[0], ev)]
    for gen in range(1, params.n_iter + 1):
        elites = pop[: params.n_el]
        children = []
        while len(elites) + len(children) < params.n_pop:
            i, j = rng.choice(len(elites), size=2, replace=False) if len(elites) > 1 else (0, 0)
            a, b = elites[int(i)], elites[int(j)]
            union = set(g.edge_ids) - (a.open_branches & b.open_branches)
            child = random_tree_config(g, rng, allowed=union)
            if rng.random() < params.p_mut:
                child = cycle_mutation(net, child, rng)
            children.append(child)
        pop = _rank(elites + children, ev)
        trace.append(_generation(gen, pop[0], ev))
    best = pop[0]
    evaluation, res = ev.solve(best)
    if not evaluation.converged:
        raise SolverError("jakus: no candidate produced a converged power flow", trace, ev.counter.calls)
    return finish(net, best, res, ev.counter.calls, t0, "jakus", trace)


def _generation(gen: int, best: SwitchConfiguration, ev: Evaluator) -> dict:
    e = ev(best)
    return {"generation": gen, "best_fitness": e.value, "losses_kw": e.losses_kw, "v_min": e.v_min, "npf": ev.counter.calls}


# -- selective binary PSO ----------------------------------------------------------


@dataclass(frozen=True)
class PSOParams:
    n_particles: int = 15
    n_iter: int = 25
    w: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    rng_seed: int = 0
    v_clamp: float = 6.0
    repair_tries: int = 10

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not (self.w > 0 and self.c1 > 0 and self.c2 > 0):
            raise ValueError("w, c1 and c2 must be positive")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    fitness: float
    best_position: np.ndarray
    best_fitness: float
    history: list[float] = field(default_factory=list)


def selective_index(v: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Bucket ``d_n * sigmoid(v)`` into 0-based switch indices.

    Bucket i holds values in (i, i + 1]; a value landing exactly on an
    integer goes to the lower bucket.
    """
    s = sizes / (1.0 + np.exp(-v))
    return np.clip(np.ceil(s).astype(int) - 1, 0, sizes - 1)


class _LoopSpace:
    """Maps one switch index per loop to a configuration, repairing clashes."""

    def __init__(self, net: Network, loops: list[list[int]]) -> None:
        self.net = net
        self.loops = [[k for k in loop if net.branches[k].switchable] for loop in loops]
        if any(not loop for loop in self.loops):
            raise SolverError("sbpso: a loop has no switchable branch")
        for d, loop in enumerate(self.loops):
            if len(loop) == 1:
                log.info("sbpso: loop %d has a single switch; dimension fixed", d)
        self.sizes = np.array([len(loop) for loop in self.loops])

    def config(self, pos: np.ndarray) -> SwitchConfiguration:
        return SwitchConfiguration.of(self.loops[d][int(i)] for d, i in enumerate(pos))

    def repair(self, pos: np.ndarray, rng: np.random.Generator, tries: int) -> tuple[np.ndarray, bool]:
        """Open loop choices in order; a choice that repeats or disconnects is re-drawn."""
        pos = pos.copy()
        chosen: set[int] = set()
        for d in range(len(pos)):
            ok = False
            for attempt in range(tries + 1):
                k = self.loops[d][int(pos[d])]
                if k not in chosen and apply_configuration(self.net, SwitchConfiguration(chosen | {k})).is_connected:
                    ok = True
                    break
                if attempt < tries:
                    pos[d] = rng.integers(self.sizes[d])
            if not ok:
                return pos, False
            chosen.add(self.loops[d][int(pos[d])])
        return pos, True


def khalil_sbpso(
    net: Network,
    params: PSOParams = PSOParams(),
    spec: FitnessSpec = FitnessSpec(),
    opts: PFOptions = PFOptions(),
    loops: list[list[int]] | None = None,
    default_ties: SwitchConfiguration | None = None,
) -> Solution:
    """Selective binary PSO with one dimension per fundamental loop.

    Loops default to the fundamental loops of ``default_ties``.

    Velocities follow the usual inertia + cognitive + social update with
    fresh uniform r1, r2 per particle, dimension and iteration, clamped to
    ``±v_clamp``. The new switch in each loop is the ``d_n * sigmoid(v)``
    bucket. Clashing choices are re-drawn up to ``repair_tries`` times,
    after which the particle scores 0 and is not solved.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(params.rng_seed)
    if loops is None:
        if default_ties is None:
            raise ValueError("khalil_sbpso needs loops or default_ties")
        loops = fundamental_loops(net, default_ties)
    space = _LoopSpace(net, loops)
    ev = Evaluator(net, spec, opts)
    dims = len(space.sizes)

    def score(pos: np.ndarray) -> tuple[np.ndarray, float]:
        pos, ok = space.repair(pos, rng, params.repair_tries)
        return pos, ev(space.config(pos)).value if ok else 0.0

    swarm: list[Particle] = []
    for _ in range(params.n_particles):
        pos = rng.integers(space.sizes)
        vel = rng.uniform(-1.0, 1.0, dims)
        pos, fit = score(pos)
        swarm.append(Particle(pos, vel, fit, pos.copy(), fit, [fit]))
    gbest = max(swarm, key=lambda p: p.best_fitness)
    gb_pos, gb_fit = gbest.best_position.copy(), gbest.best_fitness
    trace = [{"iteration": 0, "best_fitness": gb_fit, "npf": ev.counter.calls}]
    for it in range(1, params.n_iter + 1):
        for p in swarm:
            r1 = rng.random(dims)
            r2 = rng.random(dims)
            p.velocity = (
                params.w * p.velocity
                + params.c1 * r1 * (p.best_position - p.position)
                + params.c2 * r2 * (gb_pos - p.position)
            )
            p.velocity = np.clip(p.velocity, -params.v_clamp, params.v_clamp)
            p.position, p.fitness = score(selective_index(p.velocity, space.sizes))
            p.history.append(p.fitness)
            if p.fitness > p.best_fitness:
                p.best_position, p.best_fitness = p.position.copy(), p.fitness
                if p.fitness > gb_fit:
                    gb_pos, gb_fit = p.position.copy(), p.fitness
        trace.append({"iteration": it, "best_fitness": gb_fit, "npf": ev.counter.calls})
    if gb_fit <= 0.0:
        raise SolverError("khalil: no feasible particle found", trace, ev.counter.calls)
    best = space.config(gb_pos)
    _, res = ev.solve(best)
    return finish(net, best, res, ev.counter.calls, t0, "khalil", trace)


# -- Pareto sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class ParetoPoint:
    w_loss: float
    losses_kw: float
    v_min: float
    runs: int = 1


def derived_seed(base: int, *index: int) -> int:
    """Independent child seed for run ``index`` of a sweep."""
    return int(np.random.SeedSequence([base, *index]).generate_state(1)[0])


def _pareto_run(task: tuple) -> tuple[float, float]:
    net, method, spec, opts, params, default_ties = task
    if method == GA:
        sol = jakus_ga(net, params, spec, opts, default_ties=default_ties)
    else:
        sol = khalil_sbpso(net, params, spec, opts, default_ties=default_ties)
    return sol.losses_kw, sol.v_min


def pareto_sweep(
    net: Network,
    method: str,
    weights,
    opts: PFOptions = PFOptions(),
    runs_per_weight: int = 1,
    default_ties: SwitchConfiguration | None = None,
    base_seed: int = 0,
    loss_norm: float | None = None,
    vmin_target: float = 1.0,
    ga_params: GAParams = GAParams(),
    pso_params: PSOParams = PSOParams(),
    map_fn=map,
) -> list[ParetoPoint]:
    """Mean (losses, v_min) of repeated runs at each loss weight, sorted by weight.

    Losses are normalised by the default-ties losses unless ``loss_norm`` is
    given, so both objective terms have comparable scale. Run r at weight i
    uses seed ``derived_seed(base_seed, i, r)``. ``map_fn`` may be a pool's
    ``map``; results are gathered in input order either way.
    """
    weights = sorted(float(w) for w in weights)
    if any(not 0.0 <= w <= 1.0 for w in weights):
        raise ValueError("weights must lie in [0, 1]")
    if method not in (GA, SBPSO):
        raise ValueError(f"unknown method {method!r}; choose 'ga' or 'sbpso'")
    if runs_per_weight < 1:
        raise ValueError("runs_per_weight must be >= 1")
    if loss_norm is None:
        base = evaluate_fitness(net, default_ties, FitnessSpec(), opts) if default_ties is not None else None
        loss_norm = base.losses_kw if base is not None and base.converged else 1.0
    params = ga_params if method == GA else pso_params
    tasks = []
    for i, w in enumerate(weights):
        spec = FitnessSpec(w_loss=w, loss_norm=loss_norm, vmin_target=vmin_target)
        for r in range(runs_per_weight):
            run_params = replace(params, rng_seed=derived_seed(base_seed, i, r))
            tasks.append((net, method, spec, opts, run_params, default_ties))
    results = list(map_fn(_pareto_run, tasks))
    points = []
    for i, w in enumerate(weights):
        chunk = results[i * runs_per_weight : (i + 1) * runs_per_weight]
        losses = [c[0] for c in chunk]
        vmins = [c[1] for c in chunk]
        points.append(ParetoPoint(w, float(np.mean(losses)), float(np.mean(vmins)), runs_per_weight))
    return points


def non_dominated(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Points not beaten on both lower losses and higher v_min."""
    front = []
    for p in points:
        dominated = any(
            q.losses_kw <= p.losses_kw and q.v_min >= p.v_min and (q.losses_kw < p.losses_kw or q.v_min > p.v_min)
            for q in points
        )
        if not dominated:
            front.append(p)
    return front
