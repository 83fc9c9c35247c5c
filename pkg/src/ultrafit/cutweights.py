"""Cut weights of a spanning tree, exact and AFN-approximated.

The cut weight of tree edge e is the largest distance between the two
clusters e joins when the tree edges are replayed in increasing order (the
components of the forest of strictly lighter edges, given the strict edge
order).  The approximate version replays the same merges on an
:class:`~ultrafit.afn.AfnStructure` and queries every point of the smaller
cluster against the larger one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .afn import AfnParams, initialize
from .dataset import PointSet, cross_extrema
from .errors import InvalidTree
from .kt import SpanningTree, kruskal_clusters

MULTIPLIER_MODES = ("strict", "sqrt", "custom")


@dataclass(frozen=True)
class CwParams:
    alpha: float
    mode: str = "sqrt"
    value: float | None = None

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.mode not in MULTIPLIER_MODES:
            raise ValueError(f"multiplier mode must be one of {MULTIPLIER_MODES}")
        if self.mode == "custom" and (self.value is None or self.value < 1):
            raise ValueError("custom multiplier must be >= 1")

    @property
    def multiplier(self) -> float:
        if self.mode == "strict":
            return self.alpha
        if self.mode == "sqrt":
            return math.sqrt(self.alpha)
        return float(self.value)


@dataclass
class CutWeightMap:
    """``acw[i]`` is the (approximate) cut weight of ``tree`` edge ``i``."""

    tree: SpanningTree
    acw: np.ndarray
    exact: bool
    counters: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.acw)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(c) for a, b, c in zip(self.tree.u, self.tree.v, self.acw)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            for e, c in zip(self.tree, self.acw.tolist()):
                wr.writerow([e.u, e.v, repr(e.weight), repr(c)])


def _check_tree(ps: PointSet, tree: SpanningTree) -> None:
    if tree.n != ps.n:
        raise InvalidTree(f"tree has {tree.n} vertices but the point set has {ps.n}")
    if ps.n > 1:
        if tree.u.max() >= ps.n or tree.v.max() >= ps.n or min(tree.u.min(), tree.v.min()) < 0:
            raise InvalidTree("tree references ids outside the point set")
        if kernels.kruskal_select(tree.u, tree.v, ps.n).sum() != ps.n - 1:
            raise InvalidTree("tree edges do not span the point set")
    if not tree.is_sorted():
        raise InvalidTree("tree edges are not sorted by (weight, u, v)")


def exact_cut_weights(ps: PointSet, tree: SpanningTree) -> CutWeightMap:
    """Exact cut weights by scanning the smaller cluster against the larger."""
    _check_tree(ps, tree)
    cw = np.empty(len(tree))
    pairs = 0
    for i, small, large in kruskal_clusters(ps.n, tree.u, tree.v):
        _, _, dmax, _ = cross_extrema(ps.coords, small, large)
        cw[i] = dmax
        pairs += len(small) * len(large)
    return CutWeightMap(tree, cw, exact=True, counters={"cross_pairs": pairs})


def approximate_cut_weights(
    ps: PointSet,
    tree: SpanningTree,
    params: CwParams,
    afn_params: AfnParams | None = None,
    trace_merges: bool = False,
) -> CutWeightMap:
    """Cut weights within a factor ``alpha`` (strict mode), via AFN queries.

    ``alpha == 1`` is answered exactly.
    """
    if params.alpha == 1:
        return exact_cut_weights(ps, tree)
    _check_tree(ps, tree)
    if afn_params is None:
        afn_params = AfnParams.for_size(ps.n, params.alpha)
    st = initialize(ps, afn_params)
    if trace_merges:
        st.merge_log = []
    mult = params.multiplier
    acw = np.empty(len(tree))
    small_sizes = np.empty(len(tree), dtype=np.int64)
    for i, (x, y) in enumerate(zip(tree.u.tolist(), tree.v.tolist())):
        hx, hy = st.find(x), st.find(y)
        if hx.size > hy.size:
            hx, hy = hy, hx
        _, dist = st.query_batch(hy, st.members(hx))
        acw[i] = mult * dist.max()
        small_sizes[i] = hx.size
        st.merge(hx, hy)
    counters = dict(st.counters)
    counters.update(
        afn_directions=afn_params.directions,
        afn_cap=afn_params.cap,
        multiplier=mult,
        small_size_max=int(small_sizes.max()) if len(small_sizes) else 0,
    )
    out = CutWeightMap(tree, acw, exact=False, counters=counters)
    if trace_merges:
        out.counters["merge_log"] = st.merge_log
    return out
