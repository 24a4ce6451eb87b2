"""Loop-series correction to the Bethe free energy and its polymer expansion.

For any messages eta the partition function factors exactly as

    ln Z = ln Z_Bethe(eta) + ln Z_corr(eta),

where Z_corr sums, over all edge subsets g, products of local activities

    K_a(S) = sum_{local configs} p_a(sigma) prod_{b in S} sigma_ab
             * exp(-sigma_ab (eta_{a->b} + eta_{b->a}))

with p_a the factor tilted by the incoming messages and normalized.  At a BP
fixed point every degree-one activity vanishes, so only loop subsets (no
induced degree one) survive, and the correction regroups into connected
min-degree-2 polymers gamma with activities K(gamma) and a hard-core
node-disjointness constraint:

    Z_corr = sum over collections of pairwise node-disjoint polymers
             of prod K(gamma).

ln Z_corr then has the Mayer expansion over connected clusters, truncatable
at order M with Ursell signs, and a convergence criterion
sup_a sum_{gamma owns a} e^{|gamma|} |K(gamma)| < 1 controlling it.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from ._bitops import iter_chunks, popcount
from .bp import MessageSet, bethe_log_partition
from .exceptions import BudgetError
from .graphs import CheckGraph, EdgeSubset, PolymerCatalog, enumerate_polymers
from .model import FactorSpec, exact_log_partition

__all__ = [
    "ActivityTable",
    "node_activity",
    "subgraph_activity",
    "CorrectionScan",
    "scan_correction",
    "z_corr_exact",
    "max_nonloop_activity",
    "large_tail_abs",
    "z_corr_polymer_form",
    "connected_labeled_graphs",
    "MayerExpansion",
    "mayer_expansion",
    "convergence_criterion",
    "SplitReport",
    "split_report",
    "ExpansionReport",
    "build_expansion_report",
]

logger = logging.getLogger(__name__)

_MAX_TABLE_DEGREE = 16


def _node_table(graph: CheckGraph, spec: FactorSpec, eta: np.ndarray,
                a: int) -> np.ndarray:
    """K_a(S) for every local subset S, indexed by bitmask over a's edge slots."""
    eids = graph.adjacency[a]
    deg = len(eids)
    if deg > _MAX_TABLE_DEGREE:
        raise BudgetError(f"node degree {deg} exceeds activity-table cap")
    w = np.empty(deg)
    q = np.empty(deg)
    for k, e in enumerate(eids):
        _, v = graph.edges[e]
        in_dir = 0 if a == v else 1
        w[k] = eta[e, in_dir] + 0.5 * spec.h[e]
        q[k] = eta[e, 0] + eta[e, 1]
    bits = (np.arange(1 << deg)[:, None] >> np.arange(deg)) & 1
    S = 1.0 - 2.0 * bits
    expo = S @ w if deg else np.zeros(1)
    shift = float(np.max(expo))
    t = spec.parity_coupling(a)
    weights = 0.5 * (1.0 + t * np.prod(S, axis=1)) * np.exp(expo - shift)
    Z = float(np.sum(weights))
    if not (math.isfinite(Z) and Z > 0.0):
        raise ValueError(f"local normalizer vanished at node {a}")
    # factor contributed by each member edge: sigma * exp(-sigma q)
    F = S * np.exp(-S * q)
    K = np.empty(1 << deg)
    for m in range(1 << deg):
        v = weights
        mm = m
        while mm:
            low = mm & -mm
            v = v * F[:, low.bit_length() - 1]
            mm ^= low
        K[m] = float(np.sum(v)) / Z
    return K


class ActivityTable:
    """All local activities of a model at fixed messages.

    The table is an immutable snapshot: perturbing messages means building a
    new table.  ``K[a]`` holds K_a(S) for every subset S of a's incident
    edges, indexed by the local bitmask aligned with ``graph.adjacency[a]``.
    """

    def __init__(self, graph: CheckGraph, spec: FactorSpec,
                 messages: MessageSet):
        self.graph = graph
        self.spec = spec
        eta = messages.eta
        self.K = [_node_table(graph, spec, eta, a) for a in range(graph.n)]
        self.pos = [
            {e: k for k, e in enumerate(graph.adjacency[a])}
            for a in range(graph.n)
        ]

    def node_activity(self, a: int, edges: Iterable[int]) -> float:
        mask = 0
        for e in edges:
            k = self.pos[a].get(e)
            if k is None:
                raise ValueError(f"edge {e} is not incident to node {a}")
            mask |= 1 << k
        return float(self.K[a][mask])

    def subgraph_activity(self, subset: EdgeSubset) -> float:
        """K(g) = prod over touched nodes of K_a(g restricted to a's edges)."""
        out = 1.0
        for a in subset.touched_nodes:
            mask = 0
            for e in subset.edge_ids:
                k = self.pos[a].get(e)
                if k is not None:
                    mask |= 1 << k
            out *= self.K[a][mask]
        return float(out)

    def polymer_activities(self, catalog: PolymerCatalog) -> np.ndarray:
        return np.array([self.subgraph_activity(p) for p in catalog.polymers])


def node_activity(graph: CheckGraph, spec: FactorSpec, messages: MessageSet,
                  a: int, edges: Iterable[int]) -> float:
    """K_a(S) for one node without building the full table."""
    K = _node_table(graph, spec, messages.eta, a)
    mask = 0
    pos = {e: k for k, e in enumerate(graph.adjacency[a])}
    for e in edges:
        if e not in pos:
            raise ValueError(f"edge {e} is not incident to node {a}")
        mask |= 1 << pos[e]
    return float(K[mask])


def subgraph_activity(table: ActivityTable, subset: EdgeSubset) -> float:
    return table.subgraph_activity(subset)


@dataclass(frozen=True)
class CorrectionScan:
    """Exhaustive 2^{|E|} sums of activity products over edge subsets."""

    z_all: float            # sum over all subsets (exact Z/Z_Bethe)
    z_loops: float          # restricted to loop subsets (no degree-1 node)
    max_nonloop_abs: float  # largest |K(g)| among non-loop subsets
    tail_abs: float         # sum of |K(g)| over subsets touching > n/2 nodes
    num_subsets: int


def scan_correction(graph: CheckGraph, table: ActivityTable,
                    max_edges: int = 22, chunk_bits: int = 18) -> CorrectionScan:
    E = graph.num_edges
    if E > max_edges:
        raise BudgetError(f"{E} edges exceeds correction scan cap {max_edges}")
    n = graph.n
    adjacency = graph.adjacency
    tables = table.K
    all_parts, loop_parts, tail_parts = [], [], []
    max_nonloop = 0.0
    for configs in iter_chunks(E, chunk_bits):
        prod = np.ones(configs.shape)
        any_deg1 = np.zeros(configs.shape, dtype=bool)
        touched = np.zeros(configs.shape, dtype=np.int64)
        for a in range(n):
            m = np.zeros(configs.shape, dtype=np.uint64)
            for k, e in enumerate(adjacency[a]):
                m |= ((configs >> np.uint64(e)) & np.uint64(1)) << np.uint64(k)
            prod *= tables[a][m.astype(np.int64)]
            degs = popcount(m)
            any_deg1 |= degs == 1
            touched += (degs > 0).astype(np.int64)
        all_parts.append(float(np.sum(prod)))
        loop_parts.append(float(np.sum(np.where(any_deg1, 0.0, prod))))
        nonloop_abs = np.abs(np.where(any_deg1, prod, 0.0))
        max_nonloop = max(max_nonloop, float(np.max(nonloop_abs)))
        # ties at exactly n/2 count as large, matching the split rule
        big = 2 * touched >= n
        tail_parts.append(float(np.sum(np.abs(np.where(big, prod, 0.0)))))
    return CorrectionScan(
        z_all=math.fsum(all_parts),
        z_loops=math.fsum(loop_parts),
        max_nonloop_abs=max_nonloop,
        tail_abs=math.fsum(tail_parts),
        num_subsets=1 << E,
    )


def z_corr_exact(graph: CheckGraph, table: ActivityTable,
                 variant: str = "all", max_edges: int = 22) -> float:
    """Z_corr by exhaustive subset summation.

    variant="all" sums every edge subset (the identity holds at any messages);
    variant="loops" keeps only loop subsets (equal to "all" at a fixed point,
    where degree-one activities vanish).
    """
    scan = scan_correction(graph, table, max_edges=max_edges)
    if variant == "all":
        return scan.z_all
    if variant == "loops":
        return scan.z_loops
    raise ValueError(f"unknown variant {variant!r}")


def max_nonloop_activity(graph: CheckGraph, table: ActivityTable,
                         max_edges: int = 22) -> float:
    return scan_correction(graph, table, max_edges=max_edges).max_nonloop_abs


def large_tail_abs(graph: CheckGraph, table: ActivityTable,
                   max_edges: int = 22) -> float:
    """sum |K(g)| over edge subsets touching at least n/2 nodes."""
    return scan_correction(graph, table, max_edges=max_edges).tail_abs


def _disjoint_sum(items: list[tuple[int, float]], start: int, used: int) -> float:
    """Sum of prod(K) over collections of pairwise node-disjoint polymers."""
    total = 1.0
    for j in range(start, len(items)):
        m, v = items[j]
        if m & used:
            continue
        total += v * _disjoint_sum(items, j + 1, used | m)
    return total


def z_corr_polymer_form(catalog: PolymerCatalog,
                        activities: np.ndarray) -> float:
    """Z_corr as the hard-core polymer partition function.

    Exact when the catalog covers the host (node_cap >= n); with a smaller
    cap this is the truncation to small polymers.
    """
    vals = np.asarray(activities, dtype=np.float64)
    masks = catalog.node_bitmasks()
    items = [(masks[i], float(vals[i]))
             for i in range(len(vals)) if vals[i] != 0.0]
    return _disjoint_sum(items, 0, 0)


@lru_cache(maxsize=None)
def connected_labeled_graphs(M: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All connected simple graphs on vertices 0..M-1, as sorted edge tuples."""
    if M < 1:
        raise ValueError("need at least one vertex")
    pairs = list(itertools.combinations(range(M), 2))
    out = []
    for bits in range(1 << len(pairs)):
        edges = tuple(pairs[i] for i in range(len(pairs)) if bits >> i & 1)
        parent = list(range(M))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in edges:
            parent[find(u)] = find(v)
        if len({find(x) for x in range(M)}) == 1:
            out.append(edges)
    return tuple(out)


@lru_cache(maxsize=None)
def _iso_classes(M: int) -> tuple[tuple[tuple[tuple[int, int], ...], int], ...]:
    """Connected labeled graphs grouped by isomorphism: (representative, count)."""
    classes: dict[tuple, list] = {}
    perms = list(itertools.permutations(range(M)))
    for edges in connected_labeled_graphs(M):
        canon = min(
            tuple(sorted(tuple(sorted((p[u], p[v]))) for u, v in edges))
            for p in perms
        )
        if canon in classes:
            classes[canon][1] += 1
        else:
            classes[canon] = [edges, 1]
    return tuple((rep, count) for rep, count in classes.values())


@dataclass(frozen=True)
class MayerExpansion:
    """Truncated cluster expansion of ln Z_corr.

    ``orders[M-1]`` is the order-M contribution; partial sums approximate
    ln Z_corr with error controlled by the convergence criterion.
    """

    orders: tuple[float, ...]
    num_polymers: int

    @property
    def partial_sums(self) -> tuple[float, ...]:
        out, acc = [], 0.0
        for x in self.orders:
            acc += x
            out.append(acc)
        return tuple(out)

    @property
    def total(self) -> float:
        return self.partial_sums[-1] if self.orders else 0.0


def mayer_expansion(catalog: PolymerCatalog, activities: np.ndarray,
                    M_max: int = 3) -> MayerExpansion:
    """Mayer/cluster expansion of ln Z_corr through order ``M_max`` (<= 5).

    Order M sums over connected graphs on M labeled cluster slots with signs
    (-1)^{#edges}; each graph's value is an einsum homomorphism count over the
    polymer intersection matrix with activity vertex weights.  Exact per
    order; cost grows like (catalog size)^M, so high orders suit small
    catalogs.
    """
    if not 1 <= M_max <= 5:
        raise ValueError("M_max must lie in 1..5")
    vals = np.asarray(activities, dtype=np.float64)
    masks = catalog.node_bitmasks()
    keep = [i for i in range(len(vals)) if vals[i] != 0.0]
    K = vals[keep]
    P = len(keep)
    X = np.zeros((P, P))
    for i in range(P):
        mi = masks[keep[i]]
        for j in range(i, P):
            if mi & masks[keep[j]]:
                X[i, j] = X[j, i] = 1.0
    orders = []
    letters = "abcde"
    for M in range(1, M_max + 1):
        if P == 0:
            orders.append(0.0)
            continue
        total = 0.0
        for rep, count in _iso_classes(M):
            subs = [letters[i] for i in range(M)]
            ops = [K] * M
            for u, v in rep:
                subs.append(letters[u] + letters[v])
                ops.append(X)
            hom = float(np.einsum(",".join(subs) + "->", *ops, optimize=True))
            total += count * (-1.0) ** len(rep) * hom
        orders.append(total / math.factorial(M))
    return MayerExpansion(orders=tuple(orders), num_polymers=P)


def convergence_criterion(catalog: PolymerCatalog,
                          activities: np.ndarray) -> float:
    """sup over nodes of sum_{polymers touching the node} e^{|gamma|} |K(gamma)|.

    Values below 1 certify absolute convergence of the cluster expansion.
    An empty catalog gives 0.
    """
    vals = np.abs(np.asarray(activities, dtype=np.float64))
    weighted = vals * np.exp(catalog.sizes()) if len(vals) else vals
    sup = 0.0
    for ids in catalog.per_node:
        if ids:
            sup = max(sup, float(np.sum(weighted[list(ids)])))
    return sup


@dataclass(frozen=True)
class SplitReport:
    """Small/large polymer split of Z_corr at threshold n/2 touched nodes.

    ``z_small`` is the hard-core sum over small polymers only; each large
    polymer contributes K(gamma) times the small-polymer sum on the nodes it
    leaves free (``ratios`` holds Z_small(given gamma)/Z_small).  When two
    node-disjoint large polymers exist the one-large-polymer reconstruction
    is not exact and ``unique_large`` is False.
    """

    n: int
    z_small: float
    tail_abs: float
    large_ids: tuple[int, ...]
    ratios: dict[int, float]
    reconstructed: float
    z_polymer_all: float
    unique_large: bool
    truncated: bool


def split_report(graph: CheckGraph, spec: FactorSpec, messages: MessageSet,
                 catalog: Optional[PolymerCatalog] = None,
                 table: Optional[ActivityTable] = None) -> SplitReport:
    if table is None:
        table = ActivityTable(graph, spec, messages)
    if catalog is None:
        catalog = enumerate_polymers(graph, graph.n)
    vals = table.polymer_activities(catalog)
    masks = catalog.node_bitmasks()
    sizes = catalog.sizes()
    n = graph.n
    large_ids = [i for i in range(len(vals)) if 2 * int(sizes[i]) >= n]
    large_set = set(large_ids)
    small_items = [(masks[i], float(vals[i]))
                   for i in range(len(vals))
                   if i not in large_set and vals[i] != 0.0]
    all_items = [(masks[i], float(vals[i]))
                 for i in range(len(vals)) if vals[i] != 0.0]
    z_small = _disjoint_sum(small_items, 0, 0)
    ratios = {}
    reconstructed = z_small
    for i in large_ids:
        cond = _disjoint_sum(small_items, 0, masks[i])
        ratios[i] = cond / z_small
        reconstructed += float(vals[i]) * cond
    tail_abs = float(np.sum(np.abs(vals[large_ids]))) if large_ids else 0.0
    unique_large = True
    for i, j in itertools.combinations(large_ids, 2):
        if not masks[i] & masks[j]:
            unique_large = False
            logger.warning(
                "two node-disjoint large polymers (ids %d, %d); "
                "single-large-polymer split is not exact here", i, j)
            break
    return SplitReport(
        n=n,
        z_small=z_small,
        tail_abs=tail_abs,
        large_ids=tuple(large_ids),
        ratios=ratios,
        reconstructed=reconstructed,
        z_polymer_all=_disjoint_sum(all_items, 0, 0),
        unique_large=unique_large,
        truncated=not catalog.covers_host,
    )


@dataclass(frozen=True)
class ExpansionReport:
    """Everything one instance yields: Bethe value, corrections, diagnostics.

    The identity residual |ln Z - ln Z_Bethe - ln Z_corr| is recomputed from
    the stored pieces, never stored.
    """

    n: int
    d: int
    num_edges: int
    kind: str
    params: dict = field(default_factory=dict)
    converged: bool = False
    sweeps: int = 0
    bp_residual: float = math.nan
    overflow: bool = False
    bethe_node: float = math.nan
    bethe_edge: float = math.nan
    exact_log_z: Optional[float] = None
    z_corr_all: Optional[float] = None
    z_corr_loops: Optional[float] = None
    max_nonloop_abs: Optional[float] = None
    tail_abs: Optional[float] = None
    z_corr_polymer: Optional[float] = None
    catalog_size: Optional[int] = None
    catalog_cap: Optional[int] = None
    catalog_truncated: Optional[bool] = None
    criterion: Optional[float] = None
    mayer_orders: Optional[tuple[float, ...]] = None

    @property
    def bethe_total(self) -> float:
        return self.bethe_node - self.bethe_edge

    def ln_z_corr(self) -> Optional[float]:
        if self.z_corr_all is None or self.z_corr_all <= 0:
            return None
        return math.log(self.z_corr_all)

    def identity_residual(self) -> Optional[float]:
        lnc = self.ln_z_corr()
        if self.exact_log_z is None or lnc is None:
            return None
        return abs(self.exact_log_z - self.bethe_total - lnc)

    def correction_per_node(self) -> Optional[float]:
        lnc = self.ln_z_corr()
        return None if lnc is None else lnc / self.n

    def to_json_dict(self) -> dict:
        def conv(x):
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            if isinstance(x, tuple):
                return list(x)
            return x

        out = {"format_version": 1}
        for name in self.__dataclass_fields__:
            out[name] = conv(getattr(self, name))
        out["bethe_total"] = self.bethe_total
        out["ln_z_corr"] = self.ln_z_corr()
        out["identity_residual"] = self.identity_residual()
        out["correction_per_node"] = self.correction_per_node()
        return out

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, allow_nan=True)
            fh.write("\n")


def build_expansion_report(graph: CheckGraph, spec: FactorSpec,
                           messages: MessageSet, *,
                           exact_cap: int = 26, scan_cap: int = 22,
                           node_cap: Optional[int] = None,
                           mayer_max: int = 3,
                           with_polymers: bool = True,
                           params: Optional[dict] = None) -> ExpansionReport:
    """Assemble the full per-instance report at the given messages.

    Pieces above their brute-force caps are left as None rather than raised,
    so large instances still produce criterion/polymer data.
    """
    bv = bethe_log_partition(graph, spec, messages)
    exact = None
    if graph.num_edges <= exact_cap:
        exact = exact_log_partition(graph, spec, max_edges=exact_cap)
    table = ActivityTable(graph, spec, messages)
    scan = None
    if graph.num_edges <= scan_cap:
        scan = scan_correction(graph, table, max_edges=scan_cap)
    cat = None
    vals = None
    if with_polymers:
        cap = graph.n if node_cap is None else node_cap
        cat = enumerate_polymers(graph, cap)
        vals = table.polymer_activities(cat)
    mayer = None
    if cat is not None and len(cat) and mayer_max >= 1:
        mayer = mayer_expansion(cat, vals, M_max=mayer_max)
    return ExpansionReport(
        n=graph.n, d=graph.d, num_edges=graph.num_edges,
        kind=spec.kind, params=params or {},
        converged=messages.converged, sweeps=messages.sweeps,
        bp_residual=messages.residual, overflow=messages.overflow,
        bethe_node=bv.node_term, bethe_edge=bv.edge_term,
        exact_log_z=exact,
        z_corr_all=None if scan is None else scan.z_all,
        z_corr_loops=None if scan is None else scan.z_loops,
        max_nonloop_abs=None if scan is None else scan.max_nonloop_abs,
        tail_abs=None if scan is None else scan.tail_abs,
        z_corr_polymer=None if cat is None else
            z_corr_polymer_form(cat, vals),
        catalog_size=None if cat is None else len(cat),
        catalog_cap=None if cat is None else cat.node_cap,
        catalog_truncated=None if cat is None else not cat.covers_host,
        criterion=None if cat is None else convergence_criterion(cat, vals),
        mayer_orders=None if mayer is None else mayer.orders,
    )
