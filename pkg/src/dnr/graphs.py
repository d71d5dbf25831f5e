"""Spanning-tree machinery on the switch graph.

A :class:`WeightedGraph` built from a network contracts all slack buses into
node 0, so a spanning tree of the graph is exactly a radial configuration
(a feeder forest with one tree per substation). Edges keep their branch id.
Non-switchable branches are mandatory: every tree contains them.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .network import Network, SwitchConfiguration

KRUSKAL = "kruskal"
PRIM = "prim"
BORUVKA = "boruvka"
MST_ALGORITHMS = (KRUSKAL, PRIM, BORUVKA)


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    id: int
    u: int
    v: int
    weight: float = 1.0


@dataclass(frozen=True)
class WeightedGraph:
    n_nodes: int
    edges: tuple[Edge, ...]
    mandatory: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(self.edges))
        for e in self.edges:
            if not (np.isfinite(e.weight) and e.weight >= 0):
                raise GraphError(f"edge {e.id}: weight must be finite and >= 0, got {e.weight}")
            if not (0 <= e.u < self.n_nodes and 0 <= e.v < self.n_nodes):
                raise GraphError(f"edge {e.id}: endpoint out of range")

    @classmethod
    def from_network(cls, net: Network, weights: Sequence[float] | np.ndarray | None = None) -> WeightedGraph:
        """Switch graph with slacks merged into node 0; weights default to 1."""
        node = np.empty(net.n_bus, dtype=int)
        slacks = set(net.slack_buses)
        nxt = 1 if slacks else 0
        for b in net.buses:
            if b.id in slacks:
                node[b.id] = 0
            else:
                node[b.id] = nxt
                nxt += 1
        w = np.ones(net.n_branch) if weights is None else np.asarray(weights, dtype=float)
        edges = tuple(Edge(br.id, int(node[br.from_bus]), int(node[br.to_bus]), float(w[br.id])) for br in net.branches)
        mandatory = frozenset(br.id for br in net.branches if not br.switchable)
        return cls(nxt, edges, mandatory)

    def with_weights(self, weights: dict[int, float] | Sequence[float] | np.ndarray) -> WeightedGraph:
        """Same topology, new weights (indexed by edge id)."""
        if isinstance(weights, dict):
            edges = tuple(replace(e, weight=float(weights[e.id])) for e in self.edges)
        else:
            w = np.asarray(weights, dtype=float)
            edges = tuple(replace(e, weight=float(w[e.id])) for e in self.edges)
        return replace(self, edges=edges)

    def subgraph(self, edge_ids) -> WeightedGraph:
        keep = set(edge_ids)
        return replace(self, edges=tuple(e for e in self.edges if e.id in keep))

    @property
    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges)

    def edge(self, edge_id: int) -> Edge:
        return self._by_id[edge_id]

    @property
    def _by_id(self) -> dict[int, Edge]:
        cache = self.__dict__.get("_by_id_cache")
        if cache is None:
            cache = {e.id: e for e in self.edges}
            object.__setattr__(self, "_by_id_cache", cache)
        return cache

    def components(self, edge_ids=None) -> list[list[int]]:
        ids = self.edge_ids if edge_ids is None else edge_ids
        uf = _UnionFind(self.n_nodes)
        for k in ids:
            e = self._by_id[k]
            uf.union(e.u, e.v)
        groups: dict[int, list[int]] = {}
        for v in range(self.n_nodes):
            groups.setdefault(uf.find(v), []).append(v)
        return sorted(groups.values())


@dataclass(frozen=True)
class SpanningTree:
    edges: frozenset[int]
    weight: float = 0.0

    def to_config(self, g: WeightedGraph) -> SwitchConfiguration:
        """Open every graph edge that is not in the tree."""
        return SwitchConfiguration.of(k for k in g.edge_ids if k not in self.edges)


@dataclass
class TreeStream:
    """Iterator over enumerated trees; ``truncated`` is set if the limit cut it short."""

    _it: Iterator[SpanningTree]
    truncated: bool = False
    count: int = 0

    def __iter__(self):
        return self

    def __next__(self) -> SpanningTree:
        return next(self._it)


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _key(g: WeightedGraph, e: Edge) -> tuple:
    # mandatory edges sort first, then (weight, id) for a deterministic tie-break
    return (e.id not in g.mandatory, e.weight, e.id)


def _require_connected(g: WeightedGraph) -> None:
    comps = g.components()
    if len(comps) > 1:
        raise GraphError(f"graph is disconnected; components: {comps}")


def _kruskal(g: WeightedGraph) -> list[int]:
    uf = _UnionFind(g.n_nodes)
    return [e.id for e in sorted(g.edges, key=lambda e: _key(g, e)) if uf.union(e.u, e.v)]


def _prim(g: WeightedGraph) -> list[int]:
    adj: list[list[Edge]] = [[] for _ in range(g.n_nodes)]
    for e in g.edges:
        adj[e.u].append(e)
        adj[e.v].append(e)
    seen = [False] * g.n_nodes
    chosen = []
    heap: list = []

    def visit(v: int) -> None:
        seen[v] = True
        for e in adj[v]:
            w = e.v if e.u == v else e.u
            if not seen[w]:
                heapq.heappush(heap, (_key(g, e), w))

    if g.n_nodes:
        visit(0)
    while heap:
        key, w = heapq.heappop(heap)
        if seen[w]:
            continue
        chosen.append(key[2])
        visit(w)
    return chosen


def _boruvka(g: WeightedGraph) -> list[int]:
    uf = _UnionFind(g.n_nodes)
    chosen: list[int] = []
    n_comp = g.n_nodes
    while n_comp > 1:
        best: dict[int, Edge] = {}
        for e in g.edges:
            ru, rv = uf.find(e.u), uf.find(e.v)
            if ru == rv:
                continue
            for r in (ru, rv):
                if r not in best or _key(g, e) < _key(g, best[r]):
                    best[r] = e
        if not best:
            break
        for e in sorted(set(best.values()), key=lambda e: _key(g, e)):
            if uf.union(e.u, e.v):
                chosen.append(e.id)
                n_comp -= 1
    return chosen


_MST = {KRUSKAL: _kruskal, PRIM: _prim, BORUVKA: _boruvka}


def minimum_spanning_tree(g: WeightedGraph, algo: str = KRUSKAL) -> SpanningTree:
    """Minimum-weight spanning tree containing every mandatory edge.

    Ties are broken by ascending edge id, so all three algorithms return the
    same tree when weights are distinct and usually when they are not.
    """
    if algo not in _MST:
        raise ValueError(f"unknown MST algorithm {algo!r}; choose from {MST_ALGORITHMS}")
    _require_connected(g)
    ids = _MST[algo](g)
    return SpanningTree(frozenset(ids), float(sum(g.edge(k).weight for k in ids)))


def enumerate_spanning_trees(g: WeightedGraph, limit: int | None = None) -> TreeStream:
    """Stream every spanning tree exactly once, in a fixed order.

    Include/exclude recursion over edges in id order: an edge is skipped
    when it would close a cycle, and exclusion is only explored while the
    remaining edges still connect the graph. Stops after ``limit`` trees and
    sets ``truncated`` if more remain.
    """
    _require_connected(g)
    edges = sorted(g.edges, key=lambda e: e.id)
    n = g.n_nodes
    need = n - 1
    stream = TreeStream(iter(()))

    def spans_without(i: int, parent: list[int], n_chosen: int) -> bool:
        # edges before i are settled, so only the chosen forest and edges after i remain
        uf = _UnionFind(n)
        uf.parent = list(parent)
        comps = n - n_chosen
        for e in edges[i + 1 :]:
            if uf.union(e.u, e.v):
                comps -= 1
                if comps == 1:
                    return True
        return comps == 1

    def rec(i: int, parent: list[int], chosen: list[int]):
        if len(chosen) == need:
            yield chosen
            return
        if i == len(edges) or len(edges) - i < need - len(chosen):
            return
        e = edges[i]
        ru, rv = _find(parent, e.u), _find(parent, e.v)
        if ru != rv:
            saved = list(parent)
            parent[ru] = rv
            chosen.append(e.id)
            yield from rec(i + 1, parent, chosen)
            chosen.pop()
            parent[:] = saved
        if e.id in g.mandatory and ru != rv:
            return
        if ru == rv:
            yield from rec(i + 1, parent, chosen)
        elif spans_without(i, parent, len(chosen)):
            yield from rec(i + 1, parent, chosen)

    def gen():
        for chosen in rec(0, list(range(n)), []):
            if limit is not None and stream.count >= limit:
                stream.truncated = True
                return
            stream.count += 1
            yield SpanningTree(frozenset(chosen), float(sum(g.edge(k).weight for k in chosen)))

    if g.mandatory:
        uf = _UnionFind(n)
        for k in g.mandatory:
            e = g.edge(k)
            if not uf.union(e.u, e.v):
                raise GraphError("mandatory edges form a cycle")
    stream._it = gen()
    return stream


def _find(parent: list[int], a: int) -> int:
    while parent[a] != a:
        a = parent[a]
    return a


def count_spanning_trees(g: WeightedGraph) -> int:
    """Kirchhoff matrix-tree count (exact integer arithmetic).

    Mandatory edges are honoured by contracting them first.
    """
    uf = _UnionFind(g.n_nodes)
    for k in g.mandatory:
        e = g.edge(k)
        if not uf.union(e.u, e.v):
            return 0
    roots = sorted({uf.find(v) for v in range(g.n_nodes)})
    idx = {r: i for i, r in enumerate(roots)}
    m = len(roots)
    if m <= 1:
        return 1
    lap = [[0] * m for _ in range(m)]
    for e in g.edges:
        if e.id in g.mandatory:
            continue
        a, b = idx[uf.find(e.u)], idx[uf.find(e.v)]
        if a == b:
            continue
        lap[a][a] += 1
        lap[b][b] += 1
        lap[a][b] -= 1
        lap[b][a] -= 1
    return _bareiss_det([row[1:] for row in lap[1:]])


def _bareiss_det(a: list[list[int]]) -> int:
    n = len(a)
    if n == 0:
        return 1
    a = [row[:] for row in a]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def tree_path_edges(g: WeightedGraph, tree: SpanningTree, u: int, v: int) -> list[int]:
    """Edge ids on the tree path from node ``u`` to node ``v``."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n_nodes)]
    for k in tree.edges:
        e = g.edge(k)
        adj[e.u].append((e.v, k))
        adj[e.v].append((e.u, k))
    prev: dict[int, tuple[int, int]] = {u: (-1, -1)}
    stack = [u]
    while stack:
        a = stack.pop()
        if a == v:
            break
        for b, k in adj[a]:
            if b not in prev:
                prev[b] = (a, k)
                stack.append(b)
    if v not in prev:
        raise GraphError(f"nodes {u} and {v} are not joined by the tree")
    path = []
    while v != u:
        v, k = prev[v]
        path.append(k)
    return path[::-1]


def cycle_basis(g: WeightedGraph, tree: SpanningTree) -> list[list[int]]:
    """Fundamental cycles: each non-tree edge followed by its tree path."""
    out = []
    for e in sorted(g.edges, key=lambda e: e.id):
        if e.id in tree.edges:
            continue
        out.append([e.id, *tree_path_edges(g, tree, e.u, e.v)])
    return out
