"""Dendrograms, ultrametric queries, distortion and the two fitting pipelines.

A dendrogram on ``n`` leaves is stored as ``n - 1`` merge rows
``(left, right, height, size)`` in the linkage-matrix convention: leaves are
nodes ``0..n-1`` and merge ``i`` creates node ``n + i``.  The induced
ultrametric is the height of the lowest common ancestor.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .afn import AfnParams
from .cutweights import CutWeightMap, CwParams, approximate_cut_weights, exact_cut_weights
from .dataset import DistanceScale, PointSet, cross_extrema, estimate_scale_range, find_duplicate
from .errors import DatasetError, DuplicatePoints, InvalidTree, MissingWeight
from .kt import HarvestParams, SpanningTree, build_gamma_kt, prim_mst
from .lsh import DEFAULT_WIDTH


@dataclass(frozen=True)
class Dendrogram:
    n: int
    left: np.ndarray
    right: np.ndarray
    height: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise InvalidTree("a dendrogram needs at least one leaf")
        for name in ("left", "right", "size"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "height", np.asarray(self.height, dtype=np.float64))
        m = n - 1
        if not (len(self.left) == len(self.right) == len(self.height) == len(self.size) == m):
            raise InvalidTree(f"{n} leaves need {m} merge rows, got {len(self.left)}")
        if m == 0:
            return
        if np.any(self.height < 0) or not np.all(np.isfinite(self.height)):
            raise InvalidTree("heights must be finite and non-negative")
        if np.any(np.diff(self.height) < 0):
            raise InvalidTree("heights must be non-decreasing in merge order")
        created = n + np.arange(m)
        kids = np.concatenate((self.left, self.right))
        if kids.min() < 0 or np.any(self.left >= created) or np.any(self.right >= created):
            raise InvalidTree("a merge may only use leaves or earlier merges")
        if len(np.unique(kids)) != len(kids) or len(kids) != 2 * n - 2:
            raise InvalidTree("every node except the root must be merged exactly once")
        sizes = np.concatenate((np.ones(n, dtype=np.int64), self.size))
        if np.any(sizes[self.left] + sizes[self.right] != self.size):
            raise InvalidTree("merge sizes are inconsistent")

    @property
    def n_merges(self) -> int:
        return self.n - 1

    def linkage(self) -> np.ndarray:
        """``(n - 1, 4)`` float linkage matrix."""
        return np.column_stack((self.left, self.right, self.height, self.size)).astype(np.float64)

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            for l, r, h, s in zip(self.left.tolist(), self.right.tolist(), self.height.tolist(), self.size.tolist()):
                wr.writerow([l, r, repr(h), s])

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> "Dendrogram":
        rows = []
        with open(path, newline="") as fh:
            for lineno, rec in enumerate(csv.reader(fh), start=1):
                if not rec:
                    continue
                if len(rec) != 4:
                    raise InvalidTree(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
                try:
                    rows.append((int(rec[0]), int(rec[1]), float(rec[2]), int(rec[3])))
                except ValueError:
                    raise InvalidTree(f"{path}:{lineno}: malformed merge row") from None
        if not rows:
            return cls(1, [], [], [], [])
        l, r, h, s = zip(*rows)
        return cls(len(rows) + 1, l, r, h, s)

    def to_newick(self) -> str:
        """Newick string; internal nodes are labelled with their heights."""
        n = self.n
        label = [str(i) for i in range(n)] + [""] * (n - 1)
        for i, (l, r, h) in enumerate(zip(self.left.tolist(), self.right.tolist(), self.height.tolist())):
            label[n + i] = f"({label[l]},{label[r]}){h!r}"
            label[l] = label[r] = ""
        return label[-1] + ";"

    def leaf_sets(self):
        """Yield ``(i, left_leaves, right_leaves)`` for every merge."""
        n = self.n
        leaves: dict[int, np.ndarray] = {}
        for i, (l, r) in enumerate(zip(self.left.tolist(), self.right.tolist())):
            a = leaves.pop(l) if l >= n else np.array([l])
            b = leaves.pop(r) if r >= n else np.array([r])
            yield i, a, b
            leaves[n + i] = np.concatenate((a, b))

    def ultrametric(self) -> "UltrametricIndex":
        return UltrametricIndex(self)


class UltrametricIndex:
    """O(1) LCA-height queries after an Euler tour and a sparse table."""

    def __init__(self, d: Dendrogram):
        n = d.n
        self.n = n
        self.tree = d
        total = 2 * n - 1
        heights = np.concatenate((np.zeros(n), d.height))
        kids_l = np.concatenate((np.full(n, -1), d.left))
        kids_r = np.concatenate((np.full(n, -1), d.right))
        root = total - 1
        tour = np.empty(2 * total - 1, dtype=np.int64)
        depth = np.empty(2 * total - 1, dtype=np.int64)
        first = np.empty(total, dtype=np.int64)
        node_depth = np.zeros(total, dtype=np.int64)
        pos = 0
        stack = [(root, 0)]
        kl, kr = kids_l.tolist(), kids_r.tolist()
        while stack:
            node, state = stack.pop()
            tour[pos] = node
            depth[pos] = node_depth[node]
            if state == 0:
                first[node] = pos
            pos += 1
            if kl[node] < 0:
                continue
            if state == 0:
                stack.append((node, 1))
                node_depth[kl[node]] = node_depth[node] + 1
                stack.append((kl[node], 0))
            elif state == 1:
                stack.append((node, 2))
                node_depth[kr[node]] = node_depth[node] + 1
                stack.append((kr[node], 0))
        tour, depth = tour[:pos], depth[:pos]
        self._heights = heights
        self._first = first
        self._tour = tour
        # sparse table of argmin depth positions
        table = [np.arange(pos)]
        span = 1
        while 2 * span <= pos:
            prev = table[-1]
            a, b = prev[: pos - 2 * span + 1], prev[span : span + pos - 2 * span + 1]
            table.append(np.where(depth[a] <= depth[b], a, b))
            span *= 2
        self._table = table
        self._depth = depth

    def lca(self, u, v) -> np.ndarray:
        fu = self._first[np.asarray(u)]
        fv = self._first[np.asarray(v)]
        lo, hi = np.minimum(fu, fv), np.maximum(fu, fv)
        length = hi - lo + 1
        k = np.floor(np.log2(length)).astype(np.int64)
        out = np.empty(np.shape(lo), dtype=np.int64)
        for j in np.unique(k):
            sel = k == j
            t = self._table[j]
            a = t[lo[sel]]
            b = t[hi[sel] - (1 << j) + 1]
            out[sel] = np.where(self._depth[a] <= self._depth[b], a, b)
        return self._tour[out]

    def distances(self, u, v) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=np.int64))
        v = np.atleast_1d(np.asarray(v, dtype=np.int64))
        for x in (u, v):
            if len(x) and (x.min() < 0 or x.max() >= self.n):
                raise IndexError(f"leaf id out of range [0, {self.n})")
        return self._heights[self.lca(u, v)]

    def distance(self, u: int, v: int) -> float:
        return float(self.distances([u], [v])[0])


def ultrametric_distance(d: Dendrogram, u: int, v: int) -> float:
    """Height of the lowest common ancestor of leaves ``u`` and ``v``."""
    return UltrametricIndex(d).distance(u, v)


def cartesian_tree(tree: SpanningTree, weights) -> Dendrogram:
    """Merge tree edges in increasing (weight, edge order); ``weights`` is a
    CutWeightMap, an array aligned with the tree edges, or an ``{(u, v): w}`` map."""
    n = tree.n
    if isinstance(weights, CutWeightMap):
        acw = np.asarray(weights.acw, dtype=np.float64)
    elif isinstance(weights, dict):
        acw = np.empty(len(tree))
        for i, (a, b) in enumerate(zip(tree.u.tolist(), tree.v.tolist())):
            try:
                acw[i] = weights[(a, b)] if (a, b) in weights else weights[(b, a)]
            except KeyError:
                raise MissingWeight(a, b) from None
    else:
        acw = np.asarray(weights, dtype=np.float64)
    if len(acw) < len(tree):
        e = len(acw)
        raise MissingWeight(int(tree.u[e]), int(tree.v[e]))
    if len(acw) > len(tree):
        raise InvalidTree("more weights than tree edges")
    order = np.lexsort((tree.v, tree.u, tree.w, acw))
    parent = list(range(n))
    node = list(range(n))
    size = [1] * n

    def find(x):
        r = x
        while parent[r] != r:
            r = parent[r]
        while parent[x] != r:
            parent[x], x = r, parent[x]
        return r

    m = n - 1
    left = np.empty(m, np.int64)
    right = np.empty(m, np.int64)
    height = np.empty(m)
    sz = np.empty(m, np.int64)
    for i, e in enumerate(order.tolist()):
        ra, rb = find(int(tree.u[e])), find(int(tree.v[e]))
        if ra == rb:
            raise InvalidTree("tree contains a cycle")
        a, b = node[ra], node[rb]
        left[i], right[i] = min(a, b), max(a, b)
        height[i] = acw[e]
        sz[i] = size[ra] + size[rb]
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] = sz[i]
        node[ra] = n + i
    return Dendrogram(n, left, right, height, sz)


@dataclass
class DistortionReport:
    dist_max: float
    dominance_violation_max: float
    argmax_pair: tuple[int, int] | None
    dominance_pair: tuple[int, int] | None
    runtime_ms: float

    def as_dict(self) -> dict:
        return {
            "distortion_max": self.dist_max,
            "dominance_violation_max": self.dominance_violation_max,
            "argmax_pair": list(self.argmax_pair) if self.argmax_pair else None,
            "dominance_pair": list(self.dominance_pair) if self.dominance_pair else None,
        }


def distortion(d: Dendrogram, ps: PointSet) -> DistortionReport:
    """Exact max of Delta/l2 and of l2/Delta over all pairs, O(n^2 d).

    Every pair is a cross pair of exactly one merge and has Delta equal to
    that merge's height, so one closest and one farthest cross pair per merge
    decide both maxima.
    """
    if ps.n < 2:
        raise DatasetError("distortion needs at least two points")
    if d.n != ps.n:
        raise InvalidTree(f"dendrogram has {d.n} leaves but there are {ps.n} points")
    t0 = time.perf_counter()
    worst, wp = -math.inf, None
    dom, dp = 1.0, None
    for i, a, b in d.leaf_sets():
        h = float(d.height[i])
        dmin, pmin, dmax, pmax = cross_extrema(ps.coords, a, b)
        if dmin == 0:
            raise DuplicatePoints(*pmin)
        ratio = h / dmin
        if ratio > worst:
            worst, wp = ratio, (min(pmin), max(pmin))
        viol = math.inf if h == 0 else dmax / h
        if viol > dom:
            dom, dp = viol, (min(pmax), max(pmax))
    ms = (time.perf_counter() - t0) * 1e3
    return DistortionReport(float(worst), float(dom), wp, dp, ms)


# ---------------------------------------------------------------- pipelines


@dataclass
class FitParams:
    """Overall factor ``c``; ``gamma`` and ``alpha`` default to ``sqrt(c)``.

    ``multiplier`` is ``"strict"``, ``"sqrt"`` or a number >= 1.
    """

    c: float = 1.0
    gamma: float | None = None
    alpha: float | None = None
    multiplier: str | float = "sqrt"
    seed: int = 0
    lsh_width: float = DEFAULT_WIDTH
    lsh_safety: float = 1.0
    afn_c_l: float = 1.0
    afn_c_m: float = 1.0
    r_min: float | None = None
    r_max: float | None = None
    exact_threshold: int = 20_000

    def __post_init__(self):
        if self.c < 1:
            raise ValueError(f"c must be >= 1, got {self.c}")
        root = math.sqrt(self.c)
        if self.gamma is None:
            self.gamma = root
        if self.alpha is None:
            self.alpha = root
        if self.gamma < 1 or self.alpha < 1:
            raise ValueError("gamma and alpha must be >= 1")
        if isinstance(self.multiplier, str):
            if self.multiplier not in ("strict", "sqrt"):
                self.multiplier = float(self.multiplier)
        if not isinstance(self.multiplier, str) and self.multiplier < 1:
            raise ValueError("a numeric multiplier must be >= 1")

    @property
    def cw_params(self) -> CwParams:
        if isinstance(self.multiplier, str):
            return CwParams(self.alpha, self.multiplier)
        return CwParams(self.alpha, "custom", float(self.multiplier))

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FitResult:
    dendrogram: Dendrogram
    tree: SpanningTree
    cut_weights: CutWeightMap
    counters: dict = field(default_factory=dict)
    runtime_ms: dict = field(default_factory=dict)


def _require_distinct(ps: PointSet) -> None:
    dup = find_duplicate(ps)
    if dup is not None:
        raise DuplicatePoints(*dup)


def exact_fit(ps: PointSet) -> FitResult:
    """Prim MST, exact cut weights and their Cartesian tree (optimal fit)."""
    _require_distinct(ps)
    t0 = time.perf_counter()
    tree = prim_mst(ps)
    t1 = time.perf_counter()
    cw = exact_cut_weights(ps, tree)
    t2 = time.perf_counter()
    den = cartesian_tree(tree, cw)
    t3 = time.perf_counter()
    ms = {"tree": (t1 - t0) * 1e3, "cut_weights": (t2 - t1) * 1e3, "cartesian": (t3 - t2) * 1e3}
    ms["total"] = (t3 - t0) * 1e3
    return FitResult(den, tree, cw, {"route": "exact_mst", **cw.counters}, ms)


def exact_best_fit(ps: PointSet) -> Dendrogram:
    return exact_fit(ps).dendrogram


def scale_for(ps: PointSet, params: FitParams) -> DistanceScale:
    if params.r_min is not None and params.r_max is not None:
        return DistanceScale(params.r_min, params.r_max, exact=False)
    est = estimate_scale_range(ps, params.exact_threshold, seed=params.seed)
    lo = params.r_min if params.r_min is not None else est.r_min
    hi = params.r_max if params.r_max is not None else est.r_max
    return DistanceScale(lo, max(lo, hi), exact=est.exact and params.r_min is None and params.r_max is None)


def fit(ps: PointSet, params: FitParams) -> FitResult:
    """gamma-KT, (approximate) cut weights and Cartesian tree."""
    if params.gamma == 1 and params.alpha == 1:
        return exact_fit(ps)
    _require_distinct(ps)
    t0 = time.perf_counter()
    scale = None
    if params.gamma > 1 and ps.n > 1:
        scale = scale_for(ps, params)
    t1 = time.perf_counter()
    hp = HarvestParams(width=params.lsh_width, safety=params.lsh_safety, seed=params.seed)
    tree, kt_counters = build_gamma_kt(ps, params.gamma, scale, hp)
    t2 = time.perf_counter()
    afn = None
    if params.alpha > 1:
        afn = AfnParams.for_size(ps.n, params.alpha, seed=params.seed, c_l=params.afn_c_l, c_m=params.afn_c_m)
    cw = approximate_cut_weights(ps, tree, params.cw_params, afn)
    t3 = time.perf_counter()
    den = cartesian_tree(tree, cw)
    t4 = time.perf_counter()
    counters = {"kt": kt_counters, "cut_weights": cw.counters}
    if scale is not None:
        counters["scale"] = {"r_min": scale.r_min, "r_max": scale.r_max, "exact": scale.exact}
    ms = {
        "scale": (t1 - t0) * 1e3,
        "tree": (t2 - t1) * 1e3,
        "cut_weights": (t3 - t2) * 1e3,
        "cartesian": (t4 - t3) * 1e3,
        "total": (t4 - t0) * 1e3,
    }
    return FitResult(den, tree, cw, counters, ms)


def fast_ultrametric(ps: PointSet, params: FitParams) -> tuple[Dendrogram, dict]:
    res = fit(ps, params)
    return res.dendrogram, res.counters
