import inspect

import numpy as np
import pytest

import dnr.metaheuristics as mh
from dnr.graphs import WeightedGraph
from dnr.heuristics import montoya_mst
from dnr.metaheuristics import (
    GA,
    SBPSO,
    Evaluator,
    FitnessSpec,
    GAParams,
    ParetoPoint,
    PSOParams,
    cycle_mutation,
    derived_seed,
    evaluate_fitness,
    jakus_ga,
    khalil_sbpso,
    non_dominated,
    pareto_sweep,
    random_tree_config,
    selective_index,
)
from dnr.network import SwitchConfiguration, apply_configuration, fundamental_loops, is_radial
from dnr.powerflow import PFCounter, PFOptions

CASE33_OPTIMUM = ("7_8_1", "9_10_1", "14_15_1", "32_33_1", "25_29_1")
CASE33_OPTIMUM_KW = 139.5513


# -- fitness --------------------------------------------------------------------------


def test_fitness_spec():
    assert FitnessSpec().score(0.0, 0.9) == 1.0
    assert FitnessSpec(w_loss=0.25).w_vmin == 0.75
    for bad in ({"w_loss": 1.5}, {"w_loss": 0.5, "w_vmin": 0.6}, {"loss_norm": 0.0}):
        with pytest.raises(ValueError):
            FitnessSpec(**bad)


def test_inverse_loss_fitness(case33):
    counter = PFCounter()
    e = evaluate_fitness(case33.network, case33.default_ties, counter=counter)
    assert e.feasible and e.converged and counter.calls == 1
    assert e.value == pytest.approx(1.0 / (e.losses_kw + 1.0))


def test_optimum_fitter_than_default(case33):
    net = case33.network
    best = evaluate_fitness(net, net.config_from_names(CASE33_OPTIMUM))
    assert best.value > evaluate_fitness(net, case33.default_ties).value


def test_voltage_only_ranking(case33):
    net = case33.network
    spec = FitnessSpec(w_loss=0.0)
    rng = np.random.default_rng(5)
    g = WeightedGraph.from_network(net)
    evals = [evaluate_fitness(net, random_tree_config(g, rng), spec) for _ in range(20)]
    evals = [e for e in evals if e.converged]
    assert len(evals) >= 5
    assert sorted(evals, key=lambda e: e.value) == sorted(evals, key=lambda e: e.v_min)


def test_non_radial_scores_zero_without_power_flow(case33):
    counter = PFCounter()
    e = evaluate_fitness(case33.network, SwitchConfiguration(), counter=counter)
    assert e.value == 0.0 and not e.feasible and counter.calls == 0


def test_evaluator_caches(case33):
    ev = Evaluator(case33.network, FitnessSpec(), PFOptions())
    ev(case33.default_ties)
    ev(case33.default_ties)
    assert ev.counter.calls == 1


def test_tree_operators_keep_radiality(case33):
    net = case33.network
    g = WeightedGraph.from_network(net)
    rng = np.random.default_rng(0)
    cfg = random_tree_config(g, rng)
    for _ in range(50):
        assert is_radial(net, cfg)
        cfg = cycle_mutation(net, cfg, rng)


# -- GA --------------------------------------------------------------------------------


def test_ga_is_seed_deterministic(case16):
    runs = [jakus_ga(case16.network, GAParams(rng_seed=3, n_iter=10), default_ties=case16.default_ties) for _ in range(2)]
    a, b = runs
    assert (a.open_names, a.losses_kw, a.npf, a.trace) == (b.open_names, b.losses_kw, b.npf, b.trace)


def test_ga_elitism_and_optimum(case33):
    sol = jakus_ga(case33.network, GAParams(rng_seed=1), default_ties=case33.default_ties)
    best = [t["best_fitness"] for t in sol.trace]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    assert len(best) == 51
    assert sol.losses_kw <= CASE33_OPTIMUM_KW * 1.01
    assert 150 <= sol.npf <= 600


def test_ga_zero_iterations_keeps_warm_optimum(case33):
    net = case33.network
    start = net.config_from_names(CASE33_OPTIMUM)
    sol = jakus_ga(net, GAParams(n_iter=0), warm_start=start)
    assert sol.config == start


def test_ga_warm_started_from_montoya_dominates(case69):
    net = case69.network
    m = montoya_mst(net)
    sol = jakus_ga(net, GAParams(n_iter=5, rng_seed=2), warm_start=m.config)
    assert sol.losses_kw <= m.losses_kw


@pytest.mark.parametrize("method", ["ga", "sbpso"])
def test_power_flow_only_sees_radial_views(case33, method, monkeypatch):
    seen = []
    real = mh.solve

    def checked(view, *args, **kwargs):
        seen.append(view.is_radial)
        return real(view, *args, **kwargs)

    monkeypatch.setattr(mh, "solve", checked)
    if method == "ga":
        jakus_ga(case33.network, GAParams(n_iter=5), default_ties=case33.default_ties)
    else:
        khalil_sbpso(case33.network, PSOParams(n_iter=5), default_ties=case33.default_ties)
    assert seen and all(seen)


@pytest.mark.parametrize("kwargs", [{"n_el": 50}, {"n_sbe": 51}, {"p_mut": 1.5}, {"n_iter": -1}])
def test_bad_ga_params(kwargs):
    with pytest.raises(ValueError):
        GAParams(**kwargs)


# -- SBPSO ----------------------------------------------------------------------------


def test_selective_index_buckets():
    sizes = np.array([4, 4, 4, 1])
    idx = selective_index(np.array([0.0, -50.0, 50.0, 3.0]), sizes)
    # 4 * sigmoid(0) = 2 exactly, which belongs to the lower bucket
    assert idx.tolist() == [1, 0, 3, 0]


def test_sbpso_seed_deterministic_and_monotone(case33):
    a = khalil_sbpso(case33.network, PSOParams(rng_seed=4), default_ties=case33.default_ties)
    b = khalil_sbpso(case33.network, PSOParams(rng_seed=4), default_ties=case33.default_ties)
    assert (a.open_names, a.npf, a.trace) == (b.open_names, b.npf, b.trace)
    best = [t["best_fitness"] for t in a.trace]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    assert is_radial(case33.network, a.config)


def test_sbpso_best_coherence(case33, monkeypatch):
    # capture the swarm when the run finishes and check gb >= pb >= min(history)
    captured = {}
    real = mh.finish

    def spy(net, cfg, res, npf, t0, method, trace):
        captured.update(inspect.currentframe().f_back.f_locals)
        return real(net, cfg, res, npf, t0, method, trace)

    monkeypatch.setattr(mh, "finish", spy)
    khalil_sbpso(case33.network, PSOParams(rng_seed=2, n_iter=10), default_ties=case33.default_ties)
    gb = captured["gb_fit"]
    for p in captured["swarm"]:
        assert gb >= p.best_fitness >= min(p.history)
        assert p.best_fitness == max(p.history)


def test_sbpso_zero_iterations(case33):
    sol = khalil_sbpso(case33.network, PSOParams(n_iter=0), default_ties=case33.default_ties)
    assert sol.trace == [{"iteration": 0, "best_fitness": sol.trace[0]["best_fitness"], "npf": sol.npf}]
    assert sol.npf <= 15


def test_sbpso_near_oracle(case33):
    net, ties = case33.network, case33.default_ties
    results = [khalil_sbpso(net, PSOParams(rng_seed=s), default_ties=ties) for s in range(20)]
    hits = sum(r.losses_kw <= CASE33_OPTIMUM_KW * 1.05 for r in results)
    assert hits >= 16
    assert all(120 <= r.npf <= 480 for r in results)


def test_sbpso_single_switch_loop_is_fixed(case33):
    net, ties = case33.network, case33.default_ties
    loops = fundamental_loops(net, ties)
    loops[0] = loops[0][:1]
    sol = khalil_sbpso(net, PSOParams(n_iter=3), loops=loops)
    assert loops[0][0] in sol.config.open_branches


def test_sbpso_needs_loops(case33):
    with pytest.raises(ValueError):
        khalil_sbpso(case33.network)


@pytest.mark.parametrize("kwargs", [{"n_particles": 1}, {"w": 0.0}, {"c1": -1.0}])
def test_bad_pso_params(kwargs):
    with pytest.raises(ValueError):
        PSOParams(**kwargs)


# -- Pareto -------------------------------------------------------------------------------


def test_derived_seeds_are_distinct():
    seeds = {derived_seed(0, i, r) for i in range(11) for r in range(20)}
    assert len(seeds) == 220
    assert derived_seed(7, 1, 2) == derived_seed(7, 1, 2)


def test_pareto_single_point(case33):
    pts = pareto_sweep(case33.network, SBPSO, [0.5], runs_per_weight=1, default_ties=case33.default_ties,
                       pso_params=PSOParams(n_iter=2))
    assert len(pts) == 1 and pts[0].w_loss == 0.5 and pts[0].runs == 1


def test_pareto_loss_weight_lowers_losses(case33):
    calls = []

    def counting_map(fn, tasks):
        tasks = list(tasks)
        calls.append(len(tasks))
        return map(fn, tasks)

    pts = pareto_sweep(case33.network, GA, [1.0, 0.0], runs_per_weight=20, default_ties=case33.default_ties,
                       ga_params=GAParams(n_iter=5), map_fn=counting_map)
    assert [p.w_loss for p in pts] == [0.0, 1.0]
    assert pts[1].losses_kw <= pts[0].losses_kw
    assert calls == [40]


def test_pareto_rejects_bad_input(case33):
    with pytest.raises(ValueError):
        pareto_sweep(case33.network, GA, [1.2], default_ties=case33.default_ties)
    with pytest.raises(ValueError):
        pareto_sweep(case33.network, "aco", [0.5], default_ties=case33.default_ties)
    with pytest.raises(ValueError):
        pareto_sweep(case33.network, GA, [0.5], runs_per_weight=0, default_ties=case33.default_ties)


def test_non_dominated():
    pts = [ParetoPoint(0.0, 150, 0.95), ParetoPoint(0.5, 140, 0.94), ParetoPoint(1.0, 145, 0.93)]
    assert [p.w_loss for p in non_dominated(pts)] == [0.0, 0.5]


def test_solutions_are_radial_views(case16):
    sol = jakus_ga(case16.network, GAParams(n_iter=3), default_ties=case16.default_ties)
    assert apply_configuration(case16.network, sol.config).is_radial
