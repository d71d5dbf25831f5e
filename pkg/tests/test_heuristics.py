from itertools import combinations

import networkx as nx
import pytest

from conftest import triangle
from dnr.graphs import MST_ALGORITHMS
from dnr.heuristics import (
    ACTIVE_POWER,
    IMPEDANCE,
    LINE_CURRENT,
    SolverError,
    SolverRefusal,
    baran_branch_exchange,
    merlin_loop_cutting,
    montoya_mst,
    morton_brute_force,
    salkuti_voltage_exchange,
)
from dnr.network import SLACK, Network, NotRadialError, SwitchConfiguration, apply_configuration, is_radial
from dnr.powerflow import DIRECT_LOAD_FLOW, PFOptions, newton_raphson, solve

CASE33_OPTIMUM = ("7_8_1", "9_10_1", "14_15_1", "32_33_1", "25_29_1")


def exhaustive_optimum(net: Network, n_open: int) -> tuple[float, frozenset]:
    """Independent oracle: every n_open-subset of branches, tree-checked by networkx, solved by NR."""
    best = (float("inf"), frozenset())
    node = {b.id: ("grid" if b.kind == SLACK else b.id) for b in net.buses}
    for open_ in combinations(range(net.n_branch), n_open):
        g = nx.MultiGraph()
        g.add_nodes_from(set(node.values()))
        g.add_edges_from((node[br.from_bus], node[br.to_bus]) for br in net.branches if br.id not in open_)
        if not nx.is_tree(g):
            continue
        res = newton_raphson(apply_configuration(net, open_))
        best = min(best, (res.losses_kw, frozenset(open_)), key=lambda t: t[0])
    return best


# -- Merlin -------------------------------------------------------------------------


def test_merlin_on_radial_network_solves_once():
    net = triangle()
    tree = Network(net.buses, net.branches[:2], net.s_base, "path")
    sol = merlin_loop_cutting(tree)
    assert sol.config == SwitchConfiguration() and sol.npf == 1


def test_merlin_opens_the_lowest_current_branch(tri):
    res = newton_raphson(tri.all_closed())
    lowest = min(range(3), key=lambda k: (res.branch_current[k], k))
    sol = merlin_loop_cutting(tri)
    assert sol.config.open_branches == {lowest}
    assert sol.npf == 2
    assert [s["action"] for s in sol.trace] == ["solve", "open"]


def test_merlin_case33(case33):
    sol = merlin_loop_cutting(case33.network)
    assert is_radial(case33.network, sol.config)
    assert sol.losses_kw == pytest.approx(140.279, abs=1e-3)
    assert 10 <= sol.npf <= 40


def test_merlin_aborts_with_trace(case33):
    heavy = case33.network.scaled(load=60.0)
    with pytest.raises(SolverError) as err:
        merlin_loop_cutting(heavy)
    assert err.value.trace and err.value.npf >= 1


# -- Baran and Salkuti ---------------------------------------------------------------


def test_baran_reaches_oracle_on_case33(case33):
    sol = baran_branch_exchange(case33.network, case33.default_ties)
    assert set(sol.open_names) == set(CASE33_OPTIMUM)
    assert 4 <= sol.npf <= 16


def test_baran_fixed_point(case33):
    net = case33.network
    start = net.config_from_names(CASE33_OPTIMUM)
    sol = baran_branch_exchange(net, start)
    assert sol.config == start
    assert sol.losses_kw == pytest.approx(newton_raphson(apply_configuration(net, start)).losses_kw)


def test_salkuti_case33(case33):
    sol = salkuti_voltage_exchange(case33.network, case33.default_ties)
    assert sol.losses_kw <= 202.677
    assert 5 <= sol.npf <= 20
    reasons = {s.get("reason") for s in sol.trace if s["action"] == "exchange"}
    assert reasons <= {"losses", "v_min"}


def test_salkuti_skips_equal_voltage_ties():
    net = triangle(p=0.0)
    start = SwitchConfiguration.of([2])
    sol = salkuti_voltage_exchange(net, start)
    assert sol.config == start
    assert any(s["action"] == "skip" for s in sol.trace)


@pytest.mark.parametrize("method", [baran_branch_exchange, salkuti_voltage_exchange])
def test_exchange_methods_need_radial_start(case33, method):
    with pytest.raises(NotRadialError):
        method(case33.network, SwitchConfiguration())


@pytest.mark.parametrize("method", [baran_branch_exchange, salkuti_voltage_exchange])
@pytest.mark.parametrize("name", ["case16", "case33", "case69"])
def test_exchange_never_worse_than_start(method, name, request):
    fx = request.getfixturevalue(name)
    start = newton_raphson(apply_configuration(fx.network, fx.default_ties)).losses_kw
    opts = PFOptions(DIRECT_LOAD_FLOW) if method is salkuti_voltage_exchange else PFOptions()
    sol = method(fx.network, fx.default_ties, opts)
    assert sol.losses_kw <= start * (1 + 1e-6)
    assert is_radial(fx.network, sol.config)


# -- Montoya ------------------------------------------------------------------------


def test_montoya_single_power_flow(case33):
    sol = montoya_mst(case33.network)
    assert sol.npf == 1
    assert sol.losses_kw == pytest.approx(140.706, abs=1e-3)


@pytest.mark.parametrize("weight", [LINE_CURRENT, ACTIVE_POWER, IMPEDANCE])
@pytest.mark.parametrize("algo", MST_ALGORITHMS)
def test_montoya_variants_are_radial(case33, weight, algo):
    sol = montoya_mst(case33.network, weight=weight, algo=algo)
    assert is_radial(case33.network, sol.config) and sol.npf == 1


def test_montoya_algorithms_agree(case69):
    losses = {algo: montoya_mst(case69.network, algo=algo).losses_kw for algo in MST_ALGORITHMS}
    assert len({round(v, 9) for v in losses.values()}) == 1


def test_montoya_zero_load():
    sol = montoya_mst(triangle(p=0.0), weight=IMPEDANCE)
    assert sol.losses_kw == 0.0 and len(sol.config) == 1


# -- Morton ------------------------------------------------------------------------------


def test_morton_triangle_is_best_of_three(tri):
    by_hand = min(newton_raphson(apply_configuration(tri, [k])).losses_kw for k in range(3))
    sol = morton_brute_force(tri)
    assert sol.losses_kw == pytest.approx(by_hand)
    assert sol.npf == 3 + 3


def test_morton_case16_matches_exhaustive_power_flows(case16):
    losses, open_ = exhaustive_optimum(case16.network, 3)
    sol = morton_brute_force(case16.network)
    assert sol.config.open_branches == open_
    assert sol.losses_kw == pytest.approx(losses)
    assert sol.npf == 190 + 10


def test_morton_refuses_over_limit(case33):
    with pytest.raises(SolverRefusal, match="50751"):
        morton_brute_force(case33.network, limit=0)


def test_heuristics_never_beat_case16_oracle(case16):
    net, ties = case16.network, case16.default_ties
    best = morton_brute_force(net).losses_kw
    for sol in (
        merlin_loop_cutting(net),
        baran_branch_exchange(net, ties),
        salkuti_voltage_exchange(net, ties),
        montoya_mst(net),
    ):
        assert sol.losses_kw >= best * (1 - 1e-6)  # salkuti solves with DLF
        assert is_radial(net, sol.config)


# -- determinism -------------------------------------------------------------------------


def strip(sol):
    return (sol.open_names, sol.losses_kw, sol.v_min, sol.v_max, sol.npf, sol.trace)


def test_heuristics_are_deterministic(case33):
    net, ties = case33.network, case33.default_ties
    for run in (
        lambda: merlin_loop_cutting(net),
        lambda: baran_branch_exchange(net, ties),
        lambda: salkuti_voltage_exchange(net, ties),
        lambda: montoya_mst(net),
    ):
        assert strip(run()) == strip(run())


def test_solution_reports_match_power_flow(case33):
    sol = baran_branch_exchange(case33.network, case33.default_ties)
    res = solve(apply_configuration(case33.network, sol.config))
    assert sol.losses_kw == pytest.approx(res.losses_kw, rel=1e-9)
    assert sol.v_min == pytest.approx(res.v_mag.min(), rel=1e-9)
