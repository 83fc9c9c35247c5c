"""gamma-Kruskal trees: LSH-guided edge harvesting, Kruskal and Prim.

A spanning tree T is a gamma-KT when every pair (u, v) satisfies
``max edge on the T-path(u, v) <= gamma * dist(u, v)``.  Kruskal's algorithm
applied to any edge set in which every pair is joined by a path of edges no
heavier than ``gamma * dist(u, v)`` yields one.  :func:`harvest_edges` builds
such an edge set from Local-BFS passes over LSH buckets at geometrically
growing radii.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .dataset import DistanceScale, PointSet, cross_extrema, dist_rows
from .errors import Disconnected, InvalidTree
from .lsh import DEFAULT_WIDTH, HashedBuckets, calibrate, hash_directions

log = logging.getLogger(__name__)

class WeightedEdge(NamedTuple):
    u: int
    v: int
    weight: float


class Dsu:
    """Union-find with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        """Join the sets of ``a`` and ``b``; returns the surviving root."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def labels(self) -> np.ndarray:
        roots = np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)
        _, lab = np.unique(roots, return_inverse=True)
        return lab.ravel()


def _edge_order(w: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.lexsort((v, u, w))


@dataclass
class EdgeList:
    """Undirected edges with ``u < v``, no duplicates, weights = exact distances."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    @classmethod
    def empty(cls) -> "EdgeList":
        z = np.empty(0, np.int64)
        return cls(z, z.copy(), np.empty(0, np.float64))

    @classmethod
    def from_pairs(cls, ps: PointSet, a, b) -> "EdgeList":
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if np.any(a == b):
            raise ValueError("self-loops are not edges")
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = np.unique(lo * ps.n + hi)
        return cls._from_keys(ps, keys)

    @classmethod
    def _from_keys(cls, ps: PointSet, keys: np.ndarray) -> "EdgeList":
        u, v = np.divmod(keys, ps.n)
        return cls(u, v, dist_rows(ps.coords, u, v))

    def __len__(self) -> int:
        return len(self.u)

    def __iter__(self) -> Iterator[WeightedEdge]:
        for a, b, c in zip(self.u.tolist(), self.v.tolist(), self.w.tolist()):
            yield WeightedEdge(a, b, c)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            for e in self:
                wr.writerow([e.u, e.v, repr(e.weight)])


@dataclass
class SpanningTree:
    """``n - 1`` edges sorted by the strict order (weight, u, v)."""

    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if len(self.u) != max(self.n - 1, 0):
            raise InvalidTree(f"a spanning tree on {self.n} points needs {self.n - 1} edges, got {len(self.u)}")

    @classmethod
    def from_edges(cls, ps: PointSet, a, b) -> "SpanningTree":
        """Build (and validate) a tree from endpoint arrays; weights are recomputed."""
        el = EdgeList.from_pairs(ps, a, b) if len(a) else EdgeList.empty()
        o = _edge_order(el.w, el.u, el.v)
        tree = cls(ps.n, el.u[o], el.v[o], el.w[o])
        if ps.n > 1 and kernels.kruskal_select(tree.u, tree.v, ps.n).sum() != ps.n - 1:
            raise InvalidTree("edges contain a cycle")
        return tree

    def __iter__(self) -> Iterator[WeightedEdge]:
        for a, b, c in zip(self.u.tolist(), self.v.tolist(), self.w.tolist()):
            yield WeightedEdge(a, b, c)

    def __len__(self) -> int:
        return len(self.u)

    def is_sorted(self) -> bool:
        if len(self.u) < 2:
            return True
        o = _edge_order(self.w, self.u, self.v)
        return bool(np.all(o == np.arange(len(o))))

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())


# ---------------------------------------------------------------- Local-BFS


def local_bfs(ps: PointSet, buckets: HashedBuckets, gamma: float, radius: float) -> tuple[EdgeList, int]:
    """Local-BFS in each bucket, joining points closer than ``gamma * radius``.

    Returns the emitted edges and the number of far pairs inspected.
    """
    order, starts = buckets.to_csr()
    eu, ev, coll = kernels.bucket_bfs(ps.coords, order, starts, gamma * radius)
    return (EdgeList.from_pairs(ps, eu, ev) if len(eu) else EdgeList.empty()), coll


@dataclass
class HarvestParams:
    width: float = DEFAULT_WIDTH
    safety: float = 1.0
    seed: int = 0
    # stop as soon as the harvested edges connect every point
    early_stop: bool = True


@dataclass
class HarvestResult:
    edges: EdgeList
    counters: dict = field(default_factory=dict)


def scale_grid(n: int, scale: DistanceScale) -> tuple[float, list[float]]:
    """``tau = 1 + 1/ln n`` and radii ``r_min * tau^i`` up to the first >= ``tau * r_max``."""
    tau = 1.0 + 1.0 / math.log(n)
    radii = [scale.r_min]
    while radii[-1] < tau * scale.r_max:
        radii.append(radii[-1] * tau)
    return tau, radii


def _is_connected(n: int, keys: np.ndarray) -> bool:
    if len(keys) < n - 1:
        return False
    u, v = np.divmod(keys, n)
    return int(kernels.kruskal_select(u, v, n).sum()) == n - 1


def harvest_edges(ps: PointSet, gamma: float, scale: DistanceScale, params: HarvestParams | None = None) -> HarvestResult:
    """Edge set in which every pair (u, v) is joined by edges <= gamma * dist(u, v), w.h.p."""
    params = params or HarvestParams()
    if gamma <= 1:
        raise ValueError(f"gamma must be > 1, got {gamma}")
    n = ps.n
    if n < 2:
        return HarvestResult(EdgeList.empty(), {"rounds": 0})
    tau, radii = scale_grid(n, scale)
    gp = gamma / tau
    if gp <= 1:
        raise ValueError(f"gamma={gamma} too small for n={n}: gamma/tau={gp:.4f} <= 1")
    lsh = calibrate(n, gp, w=params.width, safety=params.safety, seed=params.seed)
    acc = kernels.Harvester(ps.coords)
    # the same L hash functions (up to the width) serve every scale
    hashes = [hash_directions(params.seed, r, lsh.concat_k, ps.d) for r in range(lsh.repetitions)]
    scales_done = 0
    connected = False
    for radius in radii:
        for dirs, offs in hashes:
            acc.run(dirs, offs, params.width * radius, gp * radius)
        scales_done += 1
        if params.early_stop and len(acc) >= n - 1 and _is_connected(n, acc.keys()):
            connected = True
            break
    keys = acc.keys()
    edges = EdgeList._from_keys(ps, keys)
    counters = {
        "tau": tau,
        "gamma_prime": gp,
        "concat_k": lsh.concat_k,
        "repetitions": lsh.repetitions,
        "scales_planned": len(radii),
        "scales_done": scales_done,
        "rounds": acc.rounds,
        "collisions": acc.collisions,
        "max_round_collisions": acc.max_round_collisions,
        "edges_emitted": acc.emitted,
        "edges_unique": len(edges),
        "early_stop": connected,
    }
    log.debug("harvest %s", counters)
    return HarvestResult(edges, counters)


# ---------------------------------------------------------------- spanning trees


def kruskal_mst(edges: EdgeList, n: int) -> SpanningTree:
    """Minimum spanning tree under the (weight, u, v) order; raises Disconnected."""
    if n == 1:
        return SpanningTree(1, *(np.empty(0, np.int64),) * 2, np.empty(0))
    o = _edge_order(edges.w, edges.u, edges.v)
    u, v, w = edges.u[o], edges.v[o], edges.w[o]
    keep = kernels.kruskal_select(np.ascontiguousarray(u), np.ascontiguousarray(v), n)
    if keep.sum() != n - 1:
        dsu = Dsu(n)
        for a, b in zip(u[keep].tolist(), v[keep].tolist()):
            dsu.union(a, b)
        raise Disconnected(dsu.labels())
    return SpanningTree(n, u[keep], v[keep], w[keep])


def prim_mst(ps: PointSet) -> SpanningTree:
    """Exact Euclidean MST by dense Prim, O(n^2 d) time and O(n d) memory."""
    n, d = ps.n, ps.d
    if n == 1:
        return SpanningTree(1, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
    c = ps.coords
    cols = [c[1:, k].copy() for k in range(d)]
    ids = np.arange(1, n)
    best = np.full(n - 1, np.inf)
    par = np.zeros(n - 1, dtype=np.int64)
    eu = np.empty(n - 1, np.int64)
    ev = np.empty(n - 1, np.int64)
    u = 0
    m = n - 1
    for it in range(n - 1):
        diff = cols[0][:m] - c[u, 0]
        acc = diff * diff
        for k in range(1, d):
            diff = cols[k][:m] - c[u, k]
            acc += diff * diff
        np.sqrt(acc, out=acc)
        closer = acc < best[:m]
        best[:m][closer] = acc[closer]
        par[:m][closer] = u
        j = int(np.argmin(best[:m]))
        eu[it] = par[j]
        ev[it] = ids[j]
        u = int(ids[j])
        last = m - 1
        for col in cols:
            col[j] = col[last]
        ids[j] = ids[last]
        best[j] = best[last]
        par[j] = par[last]
        m = last
    return SpanningTree.from_edges(ps, eu, ev)


def kruskal_clusters(n: int, u: np.ndarray, v: np.ndarray):
    """Replay Kruskal merges over tree edges in the given order.

    Yields ``(i, small, large)`` member-id arrays of the two clusters joined
    by edge ``i`` (``len(small) <= len(large)``), merging after each yield.
    """
    root = np.arange(n)
    members: dict[int, np.ndarray] = {}
    for i, (a, b) in enumerate(zip(u.tolist(), v.tolist())):
        ra, rb = int(root[a]), int(root[b])
        ma = members.get(ra)
        if ma is None:
            ma = np.array([ra])
        mb = members.get(rb)
        if mb is None:
            mb = np.array([rb])
        if len(ma) > len(mb):
            ra, rb, ma, mb = rb, ra, mb, ma
        yield i, ma, mb
        root[ma] = rb
        members.pop(ra, None)
        members[rb] = np.concatenate((mb, ma))


@dataclass
class KtReport:
    ok: bool
    worst_ratio: float
    witness_pair: tuple[int, int] | None = None
    witness_edge: WeightedEdge | None = None


def verify_gamma_kt(ps: PointSet, tree: SpanningTree, gamma: float) -> KtReport:
    """Check ``path-max(u, v) <= gamma * dist(u, v)`` for every pair (O(n^2 d)).

    Pairs first joined by tree edge e have e as their path maximum when edges
    are replayed in increasing weight, so the closest such pair is the one
    with the worst ratio.
    """
    if ps.n < 2:
        return KtReport(True, 1.0)
    worst, wp, we = 0.0, None, None
    for i, small, large in kruskal_clusters(ps.n, tree.u, tree.v):
        dmin, pair, _, _ = cross_extrema(ps.coords, small, large)
        ratio = tree.w[i] / dmin
        if ratio > worst:
            worst, wp = ratio, pair
            we = WeightedEdge(int(tree.u[i]), int(tree.v[i]), float(tree.w[i]))
    return KtReport(worst <= gamma, float(worst), wp, we)


# ---------------------------------------------------------------- composite


def _bridge_components(ps: PointSet, labels: np.ndarray) -> EdgeList:
    """Closest cross pair between every two components (brute force)."""
    comps = [np.flatnonzero(labels == c) for c in range(int(labels.max()) + 1)]
    a, b = [], []
    for i in range(len(comps)):
        for j in range(i + 1, len(comps)):
            _, pair, _, _ = cross_extrema(ps.coords, comps[i], comps[j])
            a.append(pair[0])
            b.append(pair[1])
    return EdgeList.from_pairs(ps, a, b)


def _union(ps: PointSet, x: EdgeList, y: EdgeList) -> EdgeList:
    return EdgeList.from_pairs(ps, np.concatenate((x.u, y.u)), np.concatenate((x.v, y.v)))


def build_gamma_kt(
    ps: PointSet,
    gamma: float,
    scale: DistanceScale | None,
    params: HarvestParams | None = None,
    max_retries: int = 2,
) -> tuple[SpanningTree, dict]:
    """gamma-KT of ``ps``; gamma = 1 (or gamma too close to 1 for this n) uses Prim."""
    params = params or HarvestParams()
    n = ps.n
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if n < 2:
        return prim_mst(ps), {"route": "trivial"}
    tau = 1.0 + 1.0 / math.log(n)
    if gamma == 1 or gamma / tau <= 1:
        return prim_mst(ps), {"route": "exact_mst"}
    if scale is None:
        raise ValueError("a DistanceScale is required for harvesting")
    safety = params.safety
    counters: dict = {"route": "harvest", "retries": 0, "bridged": 0}
    for attempt in range(max_retries + 1):
        p = HarvestParams(**{**params.__dict__, "safety": safety})
        res = harvest_edges(ps, gamma, scale, p)
        counters.update(res.counters)
        try:
            tree = kruskal_mst(res.edges, n)
            return tree, counters
        except Disconnected as exc:
            labels = exc.labels
            log.warning("harvest left %d components (attempt %d)", exc.n_components, attempt + 1)
        if attempt < max_retries:
            counters["retries"] += 1
            safety *= 2.0
    bridge = _bridge_components(ps, labels)
    counters["bridged"] = len(bridge)
    return kruskal_mst(_union(ps, res.edges, bridge), n), counters
