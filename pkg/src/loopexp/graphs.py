"""Graphs, edge subsets, and polymer enumeration.

A check graph is a simple d-regular graph whose edges carry spins and whose
nodes carry factors.  Subgraphs are identified with subsets of the edge set.
A *loop* is an edge subset with no node of induced degree one; a *polymer* is
a connected edge subset in which every touched node has induced degree at
least two (hence it touches at least three nodes).

Irregular graphs are accepted by ``CheckGraph.from_edges`` so that trees,
disconnected hosts, and other oracle instances can reuse the subgraph
machinery; sampled and file-loaded graphs are validated as exactly d-regular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ._bitops import bits_of, iter_chunks, popcount
from .exceptions import BudgetError, PairingError

__all__ = [
    "CheckGraph",
    "EdgeSubset",
    "PolymerCatalog",
    "ExpansionVerdict",
    "sample_regular_graph",
    "read_graph",
    "write_graph",
    "subgraph_degree_profile",
    "is_loop",
    "enumerate_polymers",
    "edge_boundary",
    "check_edge_expansion",
]


class CheckGraph:
    """Simple undirected graph with canonically ordered edge list.

    Attributes
    ----------
    n : number of nodes
    d : nominal degree (exact for sampled/loaded graphs, max degree otherwise)
    edges : tuple of (u, v) pairs with u < v, lexicographically sorted
    adjacency : per node, tuple of incident edge indices (ascending)
    neighbors : per node, tuple of neighbor nodes aligned with ``adjacency``
    """

    def __init__(self, n: int, d: int, edges: Sequence[tuple[int, int]]):
        if n <= 0:
            raise ValueError("need at least one node")
        canon = []
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) out of range for n={n}")
            canon.append((min(u, v), max(u, v)))
        canon.sort()
        for i in range(1, len(canon)):
            if canon[i] == canon[i - 1]:
                raise ValueError(f"duplicate edge {canon[i]}")
        self.n = int(n)
        self.d = int(d)
        self.edges: tuple[tuple[int, int], ...] = tuple(canon)
        adjacency = [[] for _ in range(n)]
        neighbors = [[] for _ in range(n)]
        for e, (u, v) in enumerate(self.edges):
            adjacency[u].append(e)
            neighbors[u].append(v)
            adjacency[v].append(e)
            neighbors[v].append(u)
        self.adjacency = tuple(tuple(a) for a in adjacency)
        self.neighbors = tuple(tuple(a) for a in neighbors)
        self.degrees = tuple(len(a) for a in self.adjacency)
        # bitmask over edge indices incident to each node
        self.incident_mask = tuple(
            sum(1 << e for e in a) for a in self.adjacency
        )
        self.edge_index = {uv: e for e, uv in enumerate(self.edges)}

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]],
                   d: Optional[int] = None) -> "CheckGraph":
        """Build a graph from an explicit edge list.

        When ``d`` is omitted it is set to the maximum degree; regularity is
        not required here (oracle hosts may be trees or disconnected).
        """
        edges = list(edges)
        if d is None:
            deg = [0] * n
            for u, v in edges:
                deg[u] += 1
                deg[v] += 1
            d = max(deg) if deg else 0
        return cls(n, d, edges)

    def is_regular(self) -> bool:
        return all(deg == self.d for deg in self.degrees)

    def components(self) -> list[list[int]]:
        """Connected components as sorted node lists, in order of smallest node."""
        seen = [False] * self.n
        comps = []
        for start in range(self.n):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            comp = []
            while stack:
                a = stack.pop()
                comp.append(a)
                for b in self.neighbors[a]:
                    if not seen[b]:
                        seen[b] = True
                        stack.append(b)
            comps.append(sorted(comp))
        return comps

    def __repr__(self) -> str:
        return f"CheckGraph(n={self.n}, d={self.d}, edges={self.num_edges})"


def sample_regular_graph(n: int, d: int, seed, max_tries: int = 10_000) -> CheckGraph:
    """Sample a uniform simple d-regular graph by pairing half-edges.

    Each node contributes d stubs; a uniform perfect matching of the stubs is
    drawn and the result is rejected until it contains no self-loops or
    parallel edges.  Conditioned on acceptance the simple graph is uniform.
    """
    if d < 1:
        raise ValueError("degree must be at least 1")
    if n < d + 1:
        raise ValueError(f"need n >= d+1 nodes for a simple {d}-regular graph")
    if (n * d) % 2 != 0:
        raise ValueError("n*d must be even")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        pairs = perm.reshape(-1, 2)
        u = np.minimum(pairs[:, 0], pairs[:, 1])
        v = np.maximum(pairs[:, 0], pairs[:, 1])
        if np.any(u == v):
            continue
        edges = {(int(a), int(b)) for a, b in zip(u, v)}
        if len(edges) < len(u):
            continue
        return CheckGraph(n, d, sorted(edges))
    raise PairingError(
        f"no simple {d}-regular graph on {n} nodes after {max_tries} pairings"
    )


def write_graph(graph: CheckGraph, path) -> None:
    """Write the edge-list format: first line ``n d``, then sorted ``u v`` lines."""
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {graph.d}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def read_graph(path) -> CheckGraph:
    """Read the edge-list format written by :func:`write_graph`.

    Validates simplicity, canonical ordering, and exact d-regularity.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"{path}: first line must be 'n d'")
    n, d = int(head[0]), int(head[1])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: bad edge line {ln!r}")
        u, v = int(parts[0]), int(parts[1])
        if not u < v:
            raise ValueError(f"{path}: edge {u} {v} not in u < v form")
        edges.append((u, v))
    if edges != sorted(edges):
        raise ValueError(f"{path}: edges not lexicographically sorted")
    g = CheckGraph(n, d, edges)
    if not g.is_regular():
        raise ValueError(f"{path}: graph is not {d}-regular")
    return g


class EdgeSubset:
    """A subset of a graph's edges, with touched nodes and degree profile.

    Identity is the edge set: two subsets of the same host compare equal iff
    they contain the same edge indices.
    """

    __slots__ = ("graph", "bitmask", "edge_ids", "touched_nodes",
                 "_node_degree", "degree_profile")

    def __init__(self, graph: CheckGraph, edges: Iterable[int] = (),
                 bitmask: Optional[int] = None):
        self.graph = graph
        if bitmask is None:
            bitmask = 0
            for e in edges:
                bitmask |= 1 << e
        if bitmask >> graph.num_edges:
            raise ValueError("edge index out of range")
        self.bitmask = int(bitmask)
        self.edge_ids = tuple(bits_of(self.bitmask))
        deg = {}
        for e in self.edge_ids:
            u, v = graph.edges[e]
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        self._node_degree = deg
        self.touched_nodes = tuple(sorted(deg))
        profile = [0] * graph.d
        for k in deg.values():
            profile[k - 1] += 1
        self.degree_profile = tuple(profile)

    @property
    def num_edges(self) -> int:
        return len(self.edge_ids)

    @property
    def size(self) -> int:
        """Polymer size: the number of touched nodes."""
        return len(self.touched_nodes)

    def node_degree(self, a: int) -> int:
        return self._node_degree.get(a, 0)

    def is_connected(self) -> bool:
        """True when the touched nodes form one component under member edges."""
        if not self.edge_ids:
            return True
        adj = {a: [] for a in self.touched_nodes}
        for e in self.edge_ids:
            u, v = self.graph.edges[e]
            adj[u].append(v)
            adj[v].append(u)
        start = self.touched_nodes[0]
        seen = {start}
        stack = [start]
        while stack:
            a = stack.pop()
            for b in adj[a]:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        return len(seen) == len(self.touched_nodes)

    def is_polymer(self) -> bool:
        """Connected, nonempty, and min induced degree >= 2."""
        return (bool(self.edge_ids)
                and min(self._node_degree.values()) >= 2
                and self.is_connected())

    def node_bitmask(self) -> int:
        mask = 0
        for a in self.touched_nodes:
            mask |= 1 << a
        return mask

    def __eq__(self, other) -> bool:
        return (isinstance(other, EdgeSubset)
                and self.graph is other.graph
                and self.bitmask == other.bitmask)

    def __hash__(self) -> int:
        return hash((id(self.graph), self.bitmask))

    def __repr__(self) -> str:
        return f"EdgeSubset(edges={self.edge_ids})"


def subgraph_degree_profile(graph: CheckGraph, subset: EdgeSubset) -> tuple[int, ...]:
    """Degree profile (n_1, ..., n_d): counts of touched nodes by induced degree."""
    if subset.graph is not graph:
        raise ValueError("subset belongs to a different graph")
    return subset.degree_profile


def is_loop(subset: EdgeSubset) -> bool:
    """True when no touched node has induced degree one (empty set counts)."""
    profile = subset.degree_profile
    return not profile or profile[0] == 0


@dataclass(frozen=True)
class PolymerCatalog:
    """All polymers of a host up to a node-count cap, with a per-node index."""

    host: CheckGraph
    node_cap: int
    polymers: tuple[EdgeSubset, ...]
    per_node: tuple[tuple[int, ...], ...]  # polymer indices touching each node

    def __len__(self) -> int:
        return len(self.polymers)

    @property
    def covers_host(self) -> bool:
        """Cap at least the host size, so no polymer was excluded."""
        return self.node_cap >= self.host.n

    def sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.polymers], dtype=np.int64)

    def node_bitmasks(self) -> list[int]:
        return [p.node_bitmask() for p in self.polymers]


def enumerate_polymers(graph: CheckGraph, node_cap: int,
                       max_polymers: int = 200_000) -> PolymerCatalog:
    """Enumerate all polymers touching at most ``node_cap`` nodes.

    Connected edge subsets are connected vertex sets of the line graph, so the
    enumeration anchors each subset at its minimal edge index and grows it with
    larger-indexed edges through an exclusive-neighborhood extension list; each
    connected subset is visited exactly once.  Subsets whose touched-node count
    exceeds the cap are pruned (supersets only touch more nodes).  Caps below 3
    yield an empty catalog, since a polymer touches at least three nodes.
    """
    if node_cap < 0:
        raise ValueError("node_cap must be nonnegative")
    E = graph.num_edges
    line_adj = [set() for _ in range(E)]
    for a in range(graph.n):
        inc = graph.adjacency[a]
        for i, e in enumerate(inc):
            for f in inc[i + 1:]:
                line_adj[e].add(f)
                line_adj[f].add(e)
    line_adj = [sorted(s) for s in line_adj]

    polymers: list[EdgeSubset] = []

    def consider(mask: int, node_deg: dict[int, int]) -> None:
        # connected by construction; polymer iff min degree >= 2
        if min(node_deg.values()) >= 2:
            if len(polymers) >= max_polymers:
                raise BudgetError(
                    f"polymer catalog exceeds max_polymers={max_polymers}")
            polymers.append(EdgeSubset(graph, bitmask=mask))

    def extend(mask: int, node_deg: dict[int, int], ext: list[int],
               near: set[int], anchor: int) -> None:
        consider(mask, node_deg)
        for i, w in enumerate(ext):
            u, v = graph.edges[w]
            grown = (u not in node_deg) + (v not in node_deg)
            if len(node_deg) + grown > node_cap:
                continue
            new_deg = dict(node_deg)
            new_deg[u] = new_deg.get(u, 0) + 1
            new_deg[v] = new_deg.get(v, 0) + 1
            fresh = [f for f in line_adj[w] if f > anchor and f not in near]
            new_near = near | set(fresh)
            extend(mask | (1 << w), new_deg, ext[i + 1:] + fresh,
                   new_near, anchor)

    for anchor in range(E):
        u, v = graph.edges[anchor]
        if node_cap < 2:
            break
        ext0 = [f for f in line_adj[anchor] if f > anchor]
        near0 = {anchor} | set(ext0)
        extend(1 << anchor, {u: 1, v: 1}, ext0, near0, anchor)

    per_node = [[] for _ in range(graph.n)]
    for idx, p in enumerate(polymers):
        for a in p.touched_nodes:
            per_node[a].append(idx)
    return PolymerCatalog(
        host=graph,
        node_cap=node_cap,
        polymers=tuple(polymers),
        per_node=tuple(tuple(ids) for ids in per_node),
    )


def edge_boundary(graph: CheckGraph, nodes: Iterable[int]) -> int:
    """Number of edges with exactly one endpoint in ``nodes``."""
    inside = set(nodes)
    return sum(1 for u, v in graph.edges if (u in inside) != (v in inside))


@dataclass(frozen=True)
class ExpansionVerdict:
    """Result of an edge-expansion check.

    ``is_expander`` is True/False for the exhaustive and components modes; in
    sampled mode it is False when a violating witness was found and None
    otherwise (sampling cannot certify expansion).
    """

    mode: str                     # "exhaustive", "sampled", or "components"
    kappa: float
    is_expander: Optional[bool]
    witness: Optional[tuple[int, ...]]
    subsets_checked: int


def check_edge_expansion(graph: CheckGraph, kappa: float,
                         exhaustive_limit: int = 20,
                         num_samples: int = 20_000,
                         seed=0) -> ExpansionVerdict:
    """Check edge(T) >= kappa * |T| for all node sets T with |T| <= n/2.

    Hosts with several connected components fail immediately (the smallest
    component has empty boundary).  Up to ``exhaustive_limit`` nodes all
    subsets are scanned; larger graphs are spot-checked on uniform random
    subsets of admissible sizes.
    """
    n = graph.n
    comps = graph.components()
    if len(comps) > 1 and kappa > 0:
        smallest = min(comps, key=len)
        return ExpansionVerdict("components", kappa, False,
                                tuple(smallest), 0)
    half = n // 2
    endpoints = np.array(graph.edges, dtype=np.uint64) if graph.edges else \
        np.zeros((0, 2), dtype=np.uint64)
    if n <= exhaustive_limit:
        checked = 0
        for configs in iter_chunks(n):
            sizes = popcount(configs)
            keep = (sizes >= 1) & (sizes <= half)
            if not np.any(keep):
                continue
            configs = configs[keep]
            sizes = sizes[keep]
            boundary = np.zeros(configs.shape, dtype=np.int64)
            for u, v in endpoints:
                bu = (configs >> u) & np.uint64(1)
                bv = (configs >> v) & np.uint64(1)
                boundary += (bu ^ bv).astype(np.int64)
            checked += configs.size
            bad = boundary < kappa * sizes.astype(np.float64)
            if np.any(bad):
                c = int(configs[np.argmax(bad)])
                witness = tuple(bits_of(c))
                return ExpansionVerdict("exhaustive", kappa, False,
                                        witness, checked)
        return ExpansionVerdict("exhaustive", kappa, True, None, checked)

    rng = np.random.default_rng(seed)
    for k in range(num_samples):
        size = int(rng.integers(1, half + 1))
        nodes = rng.choice(n, size=size, replace=False)
        if edge_boundary(graph, nodes) < kappa * size:
            return ExpansionVerdict("sampled", kappa, False,
                                    tuple(sorted(int(a) for a in nodes)), k + 1)
    return ExpansionVerdict("sampled", kappa, None, None, num_samples)
