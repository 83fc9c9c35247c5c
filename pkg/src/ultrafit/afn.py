"""Dynamic approximate farthest-neighbor structure over a mergeable partition.

Every cluster keeps, per random Gaussian direction ``a_i``, the ``M`` members
with the largest projection ``beta = <a_i, p>``.  A query ``q`` reads those
lists in decreasing ``beta - <a_i, q>`` order (merged across directions with a
heap), keeps the first ``M`` distinct ids and returns the one truly farthest
from ``q``.  Clusters of size ``<= M`` are answered exactly.

Rows are stored in arrays with spare capacity and kept sorted by
``(beta desc, id asc)``; merging inserts the smaller cluster's rows into the
larger's in place and truncates to ``M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .dataset import PointSet
from .errors import SelfMerge, StaleHandle
from .rng import STREAM_AFN, stream


@dataclass(frozen=True)
class AfnParams:
    alpha: float
    directions: int
    cap: int
    seed: int = 0
    c_l: float = 1.0
    c_m: float = 1.0

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.directions < 1 or self.cap < 1:
            raise ValueError("directions and cap must be positive")

    @classmethod
    def for_size(cls, n: int, alpha: float, seed: int = 0, c_l: float = 1.0, c_m: float = 1.0) -> "AfnParams":
        """``L' = ceil(c_l n^(1/a^2) ln n)`` directions and cap ``M = ceil(c_m n^(1/a^2))``."""
        if alpha <= 1:
            raise ValueError(f"alpha must be > 1, got {alpha}")
        if c_l <= 0 or c_m <= 0:
            raise ValueError("c_l and c_m must be positive")
        base = n ** (1.0 / alpha**2)
        lp = max(1, math.ceil(c_l * base * math.log(max(n, 2))))
        m = max(1, math.ceil(c_m * base))
        return cls(alpha, lp, m, seed, c_l, c_m)


@dataclass(frozen=True)
class ClusterHandle:
    """Names a live cluster; becomes stale once the cluster is merged away."""

    key: int
    token: int
    size: int


class _Rows:
    __slots__ = ("ids", "betas", "count")

    def __init__(self, ids: np.ndarray, betas: np.ndarray, count: int):
        self.ids = ids
        self.betas = betas
        self.count = count


class AfnStructure:
    def __init__(self, ps: PointSet, params: AfnParams):
        self.ps = ps
        self.params = params
        n = ps.n
        self.a = stream(params.seed, STREAM_AFN).standard_normal((params.directions, ps.d))
        # betas[j, i] = <a_i, p_j>
        self.betas = np.ascontiguousarray(ps.coords @ self.a.T)
        self._parent = list(range(n))
        self._size = [1] * n
        self._members: dict[int, list[int]] = {}
        self._rows: dict[int, _Rows] = {}
        self._token = list(range(n))
        self._next_token = n
        self.counters = {
            "queries": 0,
            "candidates_scanned": 0,
            "merges": 0,
            "entries_moved": 0,
            "max_move_excess": 0,
            "entries_stored": n * params.directions,
        }
        # per-merge (moved, L' * min(|S|, |S'|, M)) when tracing is on
        self.merge_log: list[tuple[int, int]] | None = None

    @property
    def n(self) -> int:
        return self.ps.n

    # ------------------------------------------------------------ handles

    def _root(self, x: int) -> int:
        parent = self._parent
        r = x
        while parent[r] != r:
            r = parent[r]
        while parent[x] != r:
            parent[x], x = r, parent[x]
        return r

    def _check(self, h: ClusterHandle) -> int:
        k = h.key
        if not 0 <= k < self.n or self._parent[k] != k or self._token[k] != h.token:
            raise StaleHandle(h)
        return k

    def handle(self, root: int) -> ClusterHandle:
        return ClusterHandle(root, self._token[root], self._size[root])

    def find(self, q: int) -> ClusterHandle:
        if not 0 <= q < self.n:
            raise IndexError(f"point id {q} out of range [0, {self.n})")
        return self.handle(self._root(q))

    def enumerate(self, h: ClusterHandle) -> Iterator[int]:
        k = self._check(h)
        yield from self._members.get(k, (k,))

    def members(self, h: ClusterHandle) -> np.ndarray:
        k = self._check(h)
        m = self._members.get(k)
        return np.array(m if m is not None else [k], dtype=np.int64)

    def clusters(self) -> list[ClusterHandle]:
        return [self.handle(i) for i in range(self.n) if self._parent[i] == i]

    # ------------------------------------------------------------ storage

    def _rows_of(self, k: int) -> _Rows:
        r = self._rows.get(k)
        if r is None:
            lp = self.params.directions
            r = _Rows(np.full((lp, 1), k, dtype=np.int64), self.betas[k][:, None].copy(), 1)
        return r

    def stored(self, h: ClusterHandle) -> tuple[np.ndarray, np.ndarray]:
        """The ``(L', m)`` id and beta rows of a live cluster (copies)."""
        r = self._rows_of(self._check(h))
        return r.ids[:, : r.count].copy(), r.betas[:, : r.count].copy()

    # ------------------------------------------------------------ operations

    def query(self, h: ClusterHandle, q) -> tuple[int, float]:
        """(id, distance) of an approximate farthest member from ``q`` (id or point)."""
        k = self._check(h)
        r = self._rows_of(k)
        if isinstance(q, (int, np.integer)):
            if not 0 <= q < self.n:
                raise IndexError(f"point id {q} out of range [0, {self.n})")
            qc = self.ps.coords[q]
            qp = self.betas[q]
        else:
            qc = np.ascontiguousarray(q, dtype=np.float64)
            if qc.shape != (self.ps.d,):
                raise ValueError(f"query point must have shape ({self.ps.d},)")
            qp = np.ascontiguousarray(self.a @ qc)
        best, dist, nc = kernels.afn_query(self.ps.coords, qc, qp, r.ids, r.betas, r.count, self.params.cap)
        self.counters["queries"] += 1
        self.counters["candidates_scanned"] += nc
        return best, dist

    def query_batch(self, h: ClusterHandle, qids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Answer :meth:`query` for many dataset ids against one cluster."""
        r = self._rows_of(self._check(h))
        qids = np.ascontiguousarray(qids, dtype=np.int64)
        qp = np.ascontiguousarray(self.betas[qids])
        best, dist, nc = kernels.afn_query_batch(
            self.ps.coords, qids, qp, r.ids, r.betas, r.count, self.params.cap
        )
        self.counters["queries"] += len(qids)
        self.counters["candidates_scanned"] += nc
        return best, dist

    def merge(self, h1: ClusterHandle, h2: ClusterHandle) -> ClusterHandle:
        """Union of two live clusters; both handles are consumed."""
        k1, k2 = self._check(h1), self._check(h2)
        if k1 == k2:
            raise SelfMerge(h1)
        if self._size[k1] < self._size[k2]:
            k1, k2 = k2, k1
        big, small = self._rows_of(k1), self._rows_of(k2)
        cap = self.params.cap
        lp = self.params.directions
        t = min(big.count + small.count, cap)
        if big.ids.shape[1] < t:
            width = min(cap, max(4, 2 * t))
            ids = np.empty((lp, width), dtype=np.int64)
            betas = np.empty((lp, width))
            ids[:, : big.count] = big.ids[:, : big.count]
            betas[:, : big.count] = big.betas[:, : big.count]
            big = _Rows(ids, betas, big.count)
        before = big.count + small.count
        big.count, moved = kernels.afn_merge(big.ids, big.betas, big.count, small.ids, small.betas, small.count, cap)
        self._rows[k1] = big
        self._rows.pop(k2, None)

        s1, s2 = self._size[k1], self._size[k2]
        bound = lp * min(s1, s2, cap)
        c = self.counters
        c["merges"] += 1
        c["entries_moved"] += moved
        c["max_move_excess"] = max(c["max_move_excess"], moved - bound)
        c["entries_stored"] += lp * (big.count - before)
        if self.merge_log is not None:
            self.merge_log.append((moved, bound))

        m1 = self._members.get(k1)
        if m1 is None:
            m1 = self._members[k1] = [k1]
        m1.extend(self._members.pop(k2, (k2,)))
        self._parent[k2] = k1
        self._size[k1] = s1 + s2
        self._token[k2] = -1
        self._token[k1] = self._next_token
        self._next_token += 1
        return self.handle(k1)


def initialize(ps: PointSet, params: AfnParams) -> AfnStructure:
    return AfnStructure(ps, params)
