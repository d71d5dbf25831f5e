"""Electrical graph model shared by every solver.

A :class:`Network` is an immutable description of buses and branches. The
decision variable of reconfiguration is a :class:`SwitchConfiguration`, the
set of open branches. Applying one to a network gives a :class:`NetworkView`,
which is what the power-flow engines consume.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SLACK = "slack"
PV = "pv"
PQ = "pq"
BUS_KINDS = (SLACK, PV, PQ)


class NetworkError(ValueError):
    """Invalid network data or configuration."""


class NotRadialError(NetworkError):
    """An operation that needs a radial topology received a meshed or disconnected one."""


@dataclass(frozen=True)
class Bus:
    """A network node.

    Powers are in MW / MVAr; shunt admittance is expressed as MW / MVAr
    consumed at 1 pu voltage (MATPOWER ``Gs`` / ``Bs`` convention).
    ``number`` is the external label used in branch names and case files.
    """

    id: int
    number: int
    kind: str = PQ
    p_load: float = 0.0
    q_load: float = 0.0
    p_gen: float = 0.0
    q_gen: float = 0.0
    v_set: float = 1.0
    v_base: float = 1.0
    g_shunt: float = 0.0
    b_shunt: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in BUS_KINDS:
            raise NetworkError(f"bus {self.number}: unknown kind {self.kind!r}")
        if not self.v_base > 0:
            raise NetworkError(f"bus {self.number}: v_base must be positive")


@dataclass(frozen=True)
class Branch:
    """A line or transformer; ``r``, ``x`` and ``b`` are per-unit on the system base."""

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    rate: float | None = None
    switchable: bool = True
    transformer: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        if self.r < 0:
            raise NetworkError(f"branch {self.name or self.id}: negative resistance")
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.name or self.id}: both ends on bus {self.from_bus}")

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)


def branch_names(pairs: Sequence[tuple[int, int]]) -> list[str]:
    """Names in the ``lo_hi_k`` form, k counting parallel branches from 1."""
    seen: dict[tuple[int, int], int] = defaultdict(int)
    names = []
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        seen[key] += 1
        names.append(f"{key[0]}_{key[1]}_{seen[key]}")
    return names


@dataclass(frozen=True)
class SwitchConfiguration:
    open_branches: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "open_branches", frozenset(int(b) for b in self.open_branches))

    @classmethod
    def of(cls, branches: Iterable[int]) -> SwitchConfiguration:
        return cls(frozenset(branches))

    def key(self) -> tuple[int, ...]:
        return tuple(sorted(self.open_branches))

    def __len__(self) -> int:
        return len(self.open_branches)


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    s_base: float = 100.0
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        for i, bus in enumerate(self.buses):
            if bus.id != i:
                raise NetworkError(f"bus ids must be dense 0..N-1, got {bus.id} at position {i}")
        n = len(self.buses)
        for i, br in enumerate(self.branches):
            if br.id != i:
                raise NetworkError(f"branch ids must be dense 0..L-1, got {br.id} at position {i}")
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise NetworkError(f"branch {br.name or br.id} references a missing bus")
        if not self.s_base > 0:
            raise NetworkError("s_base must be positive")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def slack_buses(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind == SLACK)

    @property
    def n_con(self) -> int:
        """Number of external-grid connection points (one per slack bus)."""
        return len(self.slack_buses)

    @cached_property
    def _name_index(self) -> dict[str, int]:
        return {br.name: br.id for br in self.branches}

    def branch_id(self, name: str) -> int:
        try:
            return self._name_index[name]
        except KeyError:
            raise NetworkError(f"unknown branch {name!r}") from None

    def config_from_names(self, names: Iterable[str]) -> SwitchConfiguration:
        return SwitchConfiguration.of(self.branch_id(n) for n in names)

    def names_of(self, cfg: SwitchConfiguration) -> list[str]:
        return [self.branches[i].name for i in cfg.key()]

    def bus_by_number(self, number: int) -> Bus:
        for bus in self.buses:
            if bus.number == number:
                return bus
        raise NetworkError(f"no bus numbered {number}")

    def validate(self, cfg: SwitchConfiguration) -> None:
        for b in cfg.open_branches:
            if not 0 <= b < self.n_branch:
                raise NetworkError(f"unknown branch id {b}")
            if not self.branches[b].switchable:
                raise NetworkError(f"branch {self.branches[b].name} is not switchable")

    def scaled(self, load: Sequence[float] | float = 1.0, gen: Sequence[float] | float = 1.0) -> Network:
        """Copy with per-bus load and generation multipliers applied."""
        load = np.broadcast_to(np.asarray(load, dtype=float), (self.n_bus,))
        gen = np.broadcast_to(np.asarray(gen, dtype=float), (self.n_bus,))
        buses = tuple(
            replace(b, p_load=b.p_load * lf, q_load=b.q_load * lf, p_gen=b.p_gen * gf, q_gen=b.q_gen * gf)
            for b, lf, gf in zip(self.buses, load, gen)
        )
        return replace(self, buses=buses)

    def with_pq_generators(self) -> Network:
        """Copy where every PV bus becomes a PQ bus injecting its scheduled (p_gen, q_gen)."""
        buses = tuple(replace(b, kind=PQ) if b.kind == PV else b for b in self.buses)
        return replace(self, buses=buses)

    @property
    def has_pv(self) -> bool:
        return any(b.kind == PV for b in self.buses)

    def all_closed(self) -> NetworkView:
        return apply_configuration(self, SwitchConfiguration())


@dataclass(frozen=True, eq=False)
class NetworkView:
    """A network with some branches switched out. Engines only see closed branches."""

    net: Network
    config: SwitchConfiguration = field(default_factory=SwitchConfiguration)

    @cached_property
    def closed(self) -> tuple[int, ...]:
        open_ = self.config.open_branches
        return tuple(i for i in range(self.net.n_branch) if i not in open_)

    @cached_property
    def closed_mask(self) -> np.ndarray:
        mask = np.ones(self.net.n_branch, dtype=bool)
        mask[list(self.config.open_branches)] = False
        return mask

    @property
    def n_active(self) -> int:
        return len(self.closed)

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per bus: (neighbour, branch id) over closed branches."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.net.n_bus)]
        for k in self.closed:
            br = self.net.branches[k]
            adj[br.from_bus].append((br.to_bus, k))
            adj[br.to_bus].append((br.from_bus, k))
        return adj

    @cached_property
    def energized(self) -> np.ndarray:
        """Buses reachable from any slack through closed branches."""
        seen = np.zeros(self.net.n_bus, dtype=bool)
        queue = deque(self.net.slack_buses)
        for s in self.net.slack_buses:
            seen[s] = True
        while queue:
            u = queue.popleft()
            for v, _ in self.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return seen

    @cached_property
    def forest(self) -> Forest | None:
        """Rooted forest if the view is acyclic, else None (de-energized buses stay unrooted)."""
        return _build_forest(self)

    @property
    def is_connected(self) -> bool:
        return bool(self.energized.all())

    @property
    def is_radial(self) -> bool:
        return self.n_active == self.net.n_bus - self.net.n_con and self.is_connected


@dataclass(frozen=True)
class Forest:
    """Slack-rooted spanning forest of a radial view.

    ``order`` lists energized buses so that parents precede children; ``parent``
    and ``parent_branch`` are -1 at roots and at de-energized buses.
    """

    order: np.ndarray
    parent: np.ndarray
    parent_branch: np.ndarray
    root: np.ndarray
    depth: np.ndarray

    def path_to_root(self, bus: int) -> list[int]:
        """Branch ids from ``bus`` up to its root."""
        path = []
        while self.parent[bus] >= 0:
            path.append(int(self.parent_branch[bus]))
            bus = int(self.parent[bus])
        return path


def _build_forest(view: NetworkView) -> Forest | None:
    n = view.net.n_bus
    parent = np.full(n, -1, dtype=int)
    parent_branch = np.full(n, -1, dtype=int)
    root = np.full(n, -1, dtype=int)
    depth = np.zeros(n, dtype=int)
    order = []
    used = set()
    for s in view.net.slack_buses:
        if root[s] >= 0:
            return None  # two slacks in one component form a loop through the grid
        root[s] = s
        queue = deque([s])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v, k in view.adjacency[u]:
                if k == parent_branch[u]:
                    continue
                if root[v] >= 0:
                    return None
                root[v] = s
                parent[v] = u
                parent_branch[v] = k
                depth[v] = depth[u] + 1
                used.add(k)
                queue.append(v)
    # cycles inside de-energized islands are not seen by the BFS
    island_edges = sum(1 for k in view.closed if k not in used)
    if island_edges:
        isolated = int((root < 0).sum())
        islands = _count_components(view, root < 0)
        if island_edges != isolated - islands:
            return None
    return Forest(np.array(order, dtype=int), parent, parent_branch, root, depth)


def _count_components(view: NetworkView, mask: np.ndarray) -> int:
    seen = ~mask.copy()
    count = 0
    for start in np.flatnonzero(mask):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        stack = [start]
        while stack:
            u = stack.pop()
            for v, _ in view.adjacency[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
    return count


def apply_configuration(net: Network, cfg: SwitchConfiguration | Iterable[int] = ()) -> NetworkView:
    """Switch out the branches listed in ``cfg``; the network itself is untouched."""
    if not isinstance(cfg, SwitchConfiguration):
        cfg = SwitchConfiguration.of(cfg)
    net.validate(cfg)
    return NetworkView(net, cfg)


def as_view(obj: Network | NetworkView) -> NetworkView:
    return obj if isinstance(obj, NetworkView) else NetworkView(obj)


def is_connected(net: Network, cfg: SwitchConfiguration = SwitchConfiguration()) -> bool:
    return NetworkView(net, cfg).is_connected


def is_radial(net: Network, cfg: SwitchConfiguration = SwitchConfiguration()) -> bool:
    """Closed-branch count equals ``N_buses - N_con`` and every bus is fed from a slack."""
    return NetworkView(net, cfg).is_radial


def tree_path(forest: Forest, u: int, v: int) -> list[int] | None:
    """Branch ids on the forest path between ``u`` and ``v``.

    Buses under different slacks are joined through the (implicit) grid
    node, so the path then runs up to both roots. Returns None when either
    bus is de-energized.
    """
    if forest.root[u] < 0 or forest.root[v] < 0:
        return None
    up_u, up_v = [], []
    a, b = u, v
    if forest.root[a] != forest.root[b]:
        return forest.path_to_root(a) + forest.path_to_root(b)[::-1]
    while forest.depth[a] > forest.depth[b]:
        up_u.append(int(forest.parent_branch[a]))
        a = int(forest.parent[a])
    while forest.depth[b] > forest.depth[a]:
        up_v.append(int(forest.parent_branch[b]))
        b = int(forest.parent[b])
    while a != b:
        up_u.append(int(forest.parent_branch[a]))
        up_v.append(int(forest.parent_branch[b]))
        a, b = int(forest.parent[a]), int(forest.parent[b])
    return up_u + up_v[::-1]


def fundamental_loops(net: Network, cfg: SwitchConfiguration) -> list[list[int]]:
    """One loop per open branch: the branch itself followed by its tree path.

    The tree path is listed from the open branch's from-bus to its to-bus.
    """
    view = apply_configuration(net, cfg)
    if not view.is_radial:
        raise NotRadialError("fundamental loops need a radial configuration")
    forest = view.forest
    assert forest is not None
    loops = []
    for k in cfg.key():
        br = net.branches[k]
        path = tree_path(forest, br.from_bus, br.to_bus)
        assert path is not None
        loops.append([k, *path])
    return loops


def incidence_matrix(net: Network, cfg: SwitchConfiguration = SwitchConfiguration()) -> np.ndarray:
    """Reduced node-to-branch incidence matrix.

    Rows are non-slack buses in id order, columns closed branches in id
    order; +1 where a branch enters a bus (its to-end), -1 where it leaves.
    """
    view = apply_configuration(net, cfg)
    rows = [b.id for b in net.buses if b.kind != SLACK]
    row_of = {bus: i for i, bus in enumerate(rows)}
    a = np.zeros((len(rows), view.n_active), dtype=int)
    for j, k in enumerate(view.closed):
        br = net.branches[k]
        if br.to_bus in row_of:
            a[row_of[br.to_bus], j] += 1
        if br.from_bus in row_of:
            a[row_of[br.from_bus], j] -= 1
    return a
