import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnr.graphs import (
    BORUVKA,
    KRUSKAL,
    MST_ALGORITHMS,
    PRIM,
    Edge,
    GraphError,
    SpanningTree,
    WeightedGraph,
    count_spanning_trees,
    cycle_basis,
    enumerate_spanning_trees,
    minimum_spanning_tree,
)
from dnr.network import apply_configuration, is_radial


def graph(n, triples, mandatory=()):
    return WeightedGraph(n, tuple(Edge(i, u, v, w) for i, (u, v, w) in enumerate(triples)), frozenset(mandatory))


def to_nx(g: WeightedGraph) -> nx.MultiGraph:
    h = nx.MultiGraph()
    h.add_nodes_from(range(g.n_nodes))
    for e in g.edges:
        h.add_edge(e.u, e.v, key=e.id, weight=e.weight)
    return h


TRIANGLE = graph(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)])
SQUARE = graph(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)])


@pytest.mark.parametrize("algo", MST_ALGORITHMS)
def test_triangle_mst(algo):
    tree = minimum_spanning_tree(TRIANGLE, algo)
    assert tree.edges == {0, 1} and tree.weight == 3.0


@pytest.mark.parametrize("algo", MST_ALGORITHMS)
def test_equal_weights_give_a_spanning_tree(algo):
    tree = minimum_spanning_tree(SQUARE, algo)
    assert len(tree.edges) == 3
    assert nx.is_tree(nx.Graph([(SQUARE.edge(k).u, SQUARE.edge(k).v) for k in tree.edges]))


def test_mandatory_edges_are_kept():
    g = graph(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 9.0)], mandatory={2})
    for algo in MST_ALGORITHMS:
        assert 2 in minimum_spanning_tree(g, algo).edges


def test_disconnected_graph_lists_components():
    g = graph(4, [(0, 1, 1.0), (2, 3, 1.0)])
    with pytest.raises(GraphError, match="components"):
        minimum_spanning_tree(g)
    with pytest.raises(GraphError):
        enumerate_spanning_trees(g)


def test_bad_weights_and_algorithm():
    with pytest.raises(GraphError):
        graph(2, [(0, 1, -1.0)])
    with pytest.raises(GraphError):
        graph(2, [(0, 1, float("inf"))])
    with pytest.raises(ValueError):
        minimum_spanning_tree(TRIANGLE, "dijkstra")


def test_case33_unit_weights_same_total(case33):
    g = WeightedGraph.from_network(case33.network)
    weights = {algo: minimum_spanning_tree(g, algo).weight for algo in MST_ALGORITHMS}
    assert weights[KRUSKAL] == weights[PRIM] == weights[BORUVKA] == 32


def test_case118_impedance_mst_matches_networkx(case118):
    net = case118.network
    g = WeightedGraph.from_network(net, [abs(br.z) for br in net.branches])
    ref = nx.minimum_spanning_tree(to_nx(g)).size(weight="weight")
    for algo in MST_ALGORITHMS:
        tree = minimum_spanning_tree(g, algo)
        assert tree.weight == pytest.approx(ref, rel=1e-12)
        assert is_radial(net, tree.to_config(g))


def test_small_counts():
    assert count_spanning_trees(TRIANGLE) == 3
    assert count_spanning_trees(SQUARE) == 4
    assert count_spanning_trees(graph(3, [(0, 1, 1.0), (1, 2, 1.0)])) == 1
    assert len(list(enumerate_spanning_trees(TRIANGLE))) == 3
    assert len(list(enumerate_spanning_trees(SQUARE))) == 4


def test_parallel_edges_count_separately():
    g = graph(2, [(0, 1, 1.0), (0, 1, 2.0)])
    assert count_spanning_trees(g) == 2
    assert [t.edges for t in enumerate_spanning_trees(g)] == [{0}, {1}]


def test_enumeration_is_deterministic_and_truncates():
    first = [t.edges for t in enumerate_spanning_trees(SQUARE)]
    assert first == [t.edges for t in enumerate_spanning_trees(SQUARE)]
    stream = enumerate_spanning_trees(SQUARE, limit=2)
    assert len(list(stream)) == 2 and stream.truncated and stream.count == 2
    full = enumerate_spanning_trees(SQUARE, limit=4)
    list(full)
    assert not full.truncated


def test_case16_enumeration_matches_kirchhoff_and_networkx(case16):
    net = case16.network
    g = WeightedGraph.from_network(net)
    trees = list(enumerate_spanning_trees(g))
    assert len(trees) == count_spanning_trees(g) == 190
    assert round(nx.number_of_spanning_trees(to_nx(g))) == 190
    assert len({t.edges for t in trees}) == len(trees)
    assert all(is_radial(net, t.to_config(g)) for t in trees)


def test_case33_count(case33):
    g = WeightedGraph.from_network(case33.network)
    assert count_spanning_trees(g) == 50751
    assert round(nx.number_of_spanning_trees(to_nx(g))) == 50751


def test_case118_count_is_exact(case118):
    g = WeightedGraph.from_network(case118.network)
    assert count_spanning_trees(g) == 1950285667509184783709168507335680


def test_mandatory_edges_restrict_count():
    g = graph(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], mandatory={0})
    assert count_spanning_trees(g) == 2
    assert all(0 in t.edges for t in enumerate_spanning_trees(g))


def test_cycle_basis_counts(case14, case33):
    g14 = WeightedGraph.from_network(case14.network)
    assert len(cycle_basis(g14, minimum_spanning_tree(g14))) == 7
    net = case33.network
    g33 = WeightedGraph.from_network(net)
    tree = SpanningTree(frozenset(k for k in g33.edge_ids if k not in case33.default_ties.open_branches))
    cycles = cycle_basis(g33, tree)
    assert len(cycles) == 5
    assert sorted(c[0] for c in cycles) == sorted(case33.default_ties.open_branches)
    tree_only = g33.subgraph(tree.edges)
    assert cycle_basis(tree_only, tree) == []


def test_cycles_close(case14):
    g = WeightedGraph.from_network(case14.network)
    for cycle in cycle_basis(g, minimum_spanning_tree(g)):
        h = nx.MultiGraph()
        for k in cycle:
            e = g.edge(k)
            h.add_edge(e.u, e.v, key=k)
        assert all(d % 2 == 0 for _, d in h.degree())


@st.composite
def small_graphs(draw):
    n = draw(st.integers(2, 7))
    # a random spanning path keeps the graph connected, extra edges add loops
    order = draw(st.permutations(range(n)))
    triples = [(order[i], order[i + 1], draw(st.integers(0, 9)) * 1.0) for i in range(n - 1)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(0, 9)), max_size=8))
    triples += [(u, v, float(w)) for u, v, w in extra if u != v]
    return graph(n, triples)


@settings(max_examples=150, deadline=None)
@given(g=small_graphs())
def test_mst_is_minimum_over_all_trees(g):
    best = min(t.weight for t in enumerate_spanning_trees(g))
    for algo in MST_ALGORITHMS:
        assert minimum_spanning_tree(g, algo).weight == pytest.approx(best)


@settings(max_examples=150, deadline=None)
@given(g=small_graphs())
def test_enumeration_complete(g):
    trees = list(enumerate_spanning_trees(g))
    assert len(trees) == len({t.edges for t in trees}) == count_spanning_trees(g)
    assert count_spanning_trees(g) == round(nx.number_of_spanning_trees(to_nx(g)))


def test_default_tree_maps_back_to_configuration(case33):
    g = WeightedGraph.from_network(case33.network)
    tree = minimum_spanning_tree(g)
    view = apply_configuration(case33.network, tree.to_config(g))
    assert view.is_radial
