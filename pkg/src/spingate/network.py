"""Graph topology and the infection (zero forcing) rule.

Nodes are 0-based everywhere in this module.  File formats and reports
shift to 1-based ids at the boundary (see :mod:`spingate.io`).

Lattice generators use row-major ordering: for ``grid2d`` with dims
``(rows, cols)`` the node at ``(r, c)`` is ``r * cols + c``; for ``grid3d``
with dims ``(nx, ny, nz)`` the node at ``(x, y, z)`` is
``(x * ny + y) * nz + z``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import BadDims, CapExceeded, InputError, NotFound, NotInfecting

BRUTE_FORCE_CAP = 16


def _edge(m: int, n: int) -> tuple[int, int]:
    return (m, n) if m < n else (n, m)


@dataclass(frozen=True)
class GraphTopology:
    node_count: int
    edges: frozenset
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise InputError(f"node_count must be positive, got {self.node_count}")
        normalized = set()
        for m, n in self.edges:
            m, n = int(m), int(n)
            if m == n:
                raise InputError(f"self-loop on node {m}")
            if not (0 <= m < self.node_count and 0 <= n < self.node_count):
                raise InputError(f"edge ({m}, {n}) references a node outside 0..{self.node_count - 1}")
            normalized.add(_edge(m, n))
        object.__setattr__(self, "edges", frozenset(normalized))
        adj = [set() for _ in range(self.node_count)]
        for m, n in normalized:
            adj[m].add(n)
            adj[n].add(m)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable) -> "GraphTopology":
        edges = list(edges)
        seen = set()
        for m, n in edges:
            e = _edge(int(m), int(n))
            if e in seen:
                raise InputError(f"duplicate edge {e}")
            seen.add(e)
        return cls(node_count, frozenset(edges))

    def neighbors(self, m: int) -> frozenset:
        return self._adj[m]

    def degree(self, m: int) -> int:
        return len(self._adj[m])

    def has_edge(self, m: int, n: int) -> bool:
        return n in self._adj[m]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def is_connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            for n in self._adj[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return len(seen) == self.node_count

    def require_connected(self) -> "GraphTopology":
        # infection is not defined for disconnected graphs; refuse rather than guess
        if not self.is_connected():
            raise InputError("topology is disconnected")
        return self


@dataclass(frozen=True)
class GatewaySet:
    members: frozenset

    def __post_init__(self):
        members = frozenset(int(m) for m in self.members)
        if not members:
            raise InputError("gateway must be nonempty")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, nodes: Iterable[int]) -> "GatewaySet":
        nodes = list(nodes)
        if len(set(nodes)) != len(nodes):
            raise InputError(f"duplicate gateway nodes in {nodes}")
        return cls(frozenset(nodes))

    def validate(self, topology: GraphTopology) -> "GatewaySet":
        bad = [m for m in self.members if not 0 <= m < topology.node_count]
        if bad:
            raise InputError(f"gateway nodes {sorted(bad)} are not in the graph")
        return self

    def sorted(self) -> list[int]:
        return sorted(self.members)

    def complement(self, topology: GraphTopology) -> frozenset:
        return frozenset(range(topology.node_count)) - self.members

    def __len__(self):
        return len(self.members)

    def __contains__(self, node):
        return node in self.members

    def __iter__(self):
        return iter(self.sorted())


class ForcingStep(NamedTuple):
    infector: int
    forced: int


@dataclass(frozen=True)
class ForcingSequence:
    gateway: GatewaySet
    steps: tuple

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def replay(self, topology: GraphTopology) -> set:
        """Re-apply the steps, checking the uniqueness condition at each one."""
        infected = set(self.gateway.members)
        for mu, nu in self.steps:
            if mu not in infected:
                raise ValueError(f"step ({mu}, {nu}): infector is not infected")
            healthy = topology.neighbors(mu) - infected
            if healthy != {nu}:
                raise ValueError(
                    f"step ({mu}, {nu}): healthy neighbors of {mu} are {sorted(healthy)}"
                )
            infected.add(nu)
        return infected


def _unique_healthy(topology, node, infected):
    healthy = None
    for n in topology.neighbors(node):
        if n not in infected:
            if healthy is not None:
                return None
            healthy = n
    return healthy


def infected_closure(topology: GraphTopology, seed_set: Iterable[int]) -> frozenset:
    """Fixpoint of the infection rule started from ``seed_set``."""
    infected = set(seed_set)
    for m in infected:
        if not 0 <= m < topology.node_count:
            raise InputError(f"seed node {m} not in graph")
    frontier = list(infected)
    while frontier:
        fresh = []
        # a node can only become able to force after one of its neighbours
        # (or itself) got infected, so re-examine just those
        candidates = set(frontier)
        for m in frontier:
            candidates.update(topology.neighbors(m))
        for m in sorted(candidates):
            if m not in infected:
                continue
            nu = _unique_healthy(topology, m, infected)
            if nu is not None:
                infected.add(nu)
                fresh.append(nu)
        frontier = fresh
    return frozenset(infected)


def forcing_sequence(topology: GraphTopology, gateway: GatewaySet) -> ForcingSequence:
    """Deterministic forcing schedule from ``gateway`` to the whole graph.

    At every step the lowest-index infected node with exactly one healthy
    neighbour forces that neighbour.  Raises :class:`NotInfecting` (carrying
    the closure) when the infection stalls.
    """
    gateway.validate(topology)
    infected = set(gateway.members)
    steps = []
    while len(infected) < topology.node_count:
        for mu in sorted(infected):
            nu = _unique_healthy(topology, mu, infected)
            if nu is not None:
                steps.append(ForcingStep(mu, nu))
                infected.add(nu)
                break
        else:
            raise NotInfecting(infected, topology.node_count)
    return ForcingSequence(gateway, tuple(steps))


def is_infecting(topology: GraphTopology, nodes: Iterable[int]) -> bool:
    return len(infected_closure(topology, nodes)) == topology.node_count


def min_infecting_set(
    topology: GraphTopology, size_limit: int | None = None, cap: int = BRUTE_FORCE_CAP
) -> GatewaySet:
    """Smallest infecting set by exhaustive search (lexicographic tie-break).

    Only meant for small test graphs.
    """
    if topology.node_count > cap:
        raise CapExceeded(f"{topology.node_count} nodes exceeds brute-force cap {cap}")
    limit = topology.node_count if size_limit is None else min(size_limit, topology.node_count)
    for size in range(1, limit + 1):
        for subset in itertools.combinations(range(topology.node_count), size):
            if is_infecting(topology, subset):
                return GatewaySet(frozenset(subset))
    raise NotFound(f"no infecting set of size <= {limit}")


def _parse_dims(kind, dims, expected):
    if isinstance(dims, int):
        dims = (dims,)
    dims = tuple(int(d) for d in dims)
    if len(dims) != expected or any(d < 1 for d in dims):
        raise BadDims(f"{kind} needs {expected} positive dims, got {dims}")
    return dims


def standard_topology(kind: str, dims) -> GraphTopology:
    """Nearest-neighbour lattices: ``chain``, ``cycle``, ``grid2d``, ``grid3d``."""
    if kind == "chain":
        (n,) = _parse_dims(kind, dims, 1)
        return GraphTopology(n, frozenset((i, i + 1) for i in range(n - 1)))
    if kind == "cycle":
        (n,) = _parse_dims(kind, dims, 1)
        if n < 3:
            raise BadDims(f"cycle needs at least 3 nodes, got {n}")
        return GraphTopology(n, frozenset(_edge(i, (i + 1) % n) for i in range(n)))
    if kind == "grid2d":
        rows, cols = _parse_dims(kind, dims, 2)
        edges = set()
        for r in range(rows):
            for c in range(cols):
                k = r * cols + c
                if c + 1 < cols:
                    edges.add((k, k + 1))
                if r + 1 < rows:
                    edges.add((k, k + cols))
        return GraphTopology(rows * cols, frozenset(edges))
    if kind == "grid3d":
        nx, ny, nz = _parse_dims(kind, dims, 3)

        def idx(x, y, z):
            return (x * ny + y) * nz + z

        edges = set()
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    k = idx(x, y, z)
                    if x + 1 < nx:
                        edges.add((k, idx(x + 1, y, z)))
                    if y + 1 < ny:
                        edges.add((k, idx(x, y + 1, z)))
                    if z + 1 < nz:
                        edges.add((k, idx(x, y, z + 1)))
        return GraphTopology(nx * ny * nz, frozenset(edges))
    raise BadDims(f"unknown topology kind {kind!r}")


def standard_gateway(kind: str, dims) -> GatewaySet:
    """The canonical infecting gateway of a lattice.

    chain: the first end node; cycle: the first two nodes; grid2d: the left
    column (``c == 0``); grid3d: the ``x == 0`` face.
    """
    if kind == "chain":
        return GatewaySet(frozenset({0}))
    if kind == "cycle":
        return GatewaySet(frozenset({0, 1}))
    if kind == "grid2d":
        rows, cols = _parse_dims(kind, dims, 2)
        return GatewaySet(frozenset(r * cols for r in range(rows)))
    if kind == "grid3d":
        nx, ny, nz = _parse_dims(kind, dims, 3)
        return GatewaySet(frozenset(y * nz + z for y in range(ny) for z in range(nz)))
    raise BadDims(f"unknown topology kind {kind!r}")
