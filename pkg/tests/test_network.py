import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import triangle
from dnr.network import (
    SLACK,
    Branch,
    Bus,
    Network,
    NetworkError,
    NotRadialError,
    SwitchConfiguration,
    apply_configuration,
    branch_names,
    fundamental_loops,
    incidence_matrix,
    is_connected,
    is_radial,
    tree_path,
)


def nx_radial(net: Network, cfg: SwitchConfiguration) -> bool:
    """Independent check: slacks merged into one node, closed branches form a spanning tree."""
    g = nx.MultiGraph()
    node = {b.id: ("grid" if b.kind == SLACK else b.id) for b in net.buses}
    g.add_nodes_from(set(node.values()))
    for br in net.branches:
        if br.id not in cfg.open_branches:
            g.add_edge(node[br.from_bus], node[br.to_bus])
    return nx.is_tree(g)


def test_bus_and_branch_validation():
    with pytest.raises(NetworkError):
        Bus(0, 1, kind="bogus")
    with pytest.raises(NetworkError):
        Branch(0, 1, 1, 0.1, 0.1)
    with pytest.raises(NetworkError):
        Branch(0, 0, 1, -0.1, 0.1)


def test_network_requires_dense_ids():
    with pytest.raises(NetworkError):
        Network((Bus(1, 1, SLACK),), ())
    with pytest.raises(NetworkError):
        Network((Bus(0, 1, SLACK),), (Branch(0, 0, 3, 0.1, 0.1),))


def test_branch_names_count_parallels():
    assert branch_names([(2, 1), (1, 2), (3, 4)]) == ["1_2_1", "1_2_2", "3_4_1"]


def test_configuration_is_a_set():
    a = SwitchConfiguration.of([3, 1, 1])
    assert a.key() == (1, 3) and len(a) == 2
    assert a == SwitchConfiguration(frozenset({1, 3}))


def test_unknown_or_fixed_branch_rejected(case118):
    net = case118.network
    with pytest.raises(NetworkError):
        apply_configuration(net, [net.n_branch])
    fixed = next(b.id for b in net.branches if not b.switchable)
    with pytest.raises(NetworkError):
        apply_configuration(net, [fixed])


def test_triangle_radiality(tri):
    assert not is_radial(tri)
    assert is_connected(tri)
    for k in range(3):
        assert is_radial(tri, SwitchConfiguration.of([k]))
    cut = SwitchConfiguration.of([0, 2])
    assert not is_connected(tri, cut) and not is_radial(tri, cut)


def test_default_ties_are_radial(case16, case33, case69, case118):
    for fx in (case16, case33, case69, case118):
        assert is_radial(fx.network, fx.default_ties), fx.name
    assert not is_radial(case33.network)


def test_case14_is_meshed(case14):
    view = case14.network.all_closed()
    assert view.n_active - (case14.network.n_bus - case14.network.n_con) == 7
    assert view.forest is None


def test_multi_slack_forest(case16):
    view = apply_configuration(case16.network, case16.default_ties)
    forest = view.forest
    assert forest is not None
    assert set(forest.root[forest.root >= 0]) == set(case16.network.slack_buses)


def test_tree_path_and_loops(case33):
    net, ties = case33.network, case33.default_ties
    loops = fundamental_loops(net, ties)
    assert len(loops) == len(ties)
    view = apply_configuration(net, ties)
    for loop in loops:
        tie = loop[0]
        assert tie in ties.open_branches
        assert not set(loop[1:]) & ties.open_branches
        # closing the tie and opening any loop member restores radiality
        for k in loop[1:]:
            assert is_radial(net, SwitchConfiguration((ties.open_branches - {tie}) | {k}))
    br = net.branches[loops[0][0]]
    assert tree_path(view.forest, br.from_bus, br.to_bus) == loops[0][1:]


def test_fundamental_loops_need_radial(case33):
    with pytest.raises(NotRadialError):
        fundamental_loops(case33.network, SwitchConfiguration())


def test_incidence_matrix_columns(tri):
    a = incidence_matrix(tri, SwitchConfiguration.of([2]))
    assert a.shape == (2, 2)
    # every closed branch has at most one +1 and one -1 among non-slack rows
    assert np.all(np.abs(a).sum(axis=0) <= 2)
    assert np.all(a.sum(axis=0) >= -1) and np.all(a.sum(axis=0) <= 1)


def test_scaled_copies(case33):
    net = case33.network
    half = net.scaled(load=0.5)
    assert half.buses[5].p_load == pytest.approx(0.5 * net.buses[5].p_load)
    assert net.buses[5].p_load != half.buses[5].p_load


def test_triangle_helper_shape():
    net = triangle(load_bus=1)
    assert net.buses[1].p_load == 1.0


@settings(max_examples=300, deadline=None)
@given(data=st.data())
def test_radiality_matches_independent_tree_check(case33, case16, data):
    fx = data.draw(st.sampled_from([case33, case16]))
    net = fx.network
    ids = [b.id for b in net.branches if b.switchable]
    open_ = data.draw(st.sets(st.sampled_from(ids), max_size=8))
    cfg = SwitchConfiguration(frozenset(open_))
    view = apply_configuration(net, cfg)
    assert view.is_radial == nx_radial(net, cfg)
    assert (view.forest is not None and view.is_connected) == view.is_radial
