"""Pure-numpy implementations of the hot kernels.

These define the reference semantics; ``_kernels.pyx`` must return identical
results (same edges in the same order, same counters).
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .lsh import fingerprint, project, quantize

BACKEND = "python"


def _sq_dist_to(coords: np.ndarray, q: np.ndarray, ids: np.ndarray) -> np.ndarray:
    b = coords[ids]
    diff = q[0] - b[:, 0]
    acc = diff * diff
    for k in range(1, coords.shape[1]):
        diff = q[k] - b[:, k]
        acc += diff * diff
    return acc


def _bfs_bucket(coords, members, threshold, eu, ev) -> int:
    coll = 0
    rest = members
    while rest.size:
        x = int(rest[0])
        rest = rest[1:]
        queue = deque([x])
        while queue and rest.size:
            u = queue.popleft()
            d = np.sqrt(_sq_dist_to(coords, coords[u], rest))
            near = d <= threshold
            hit = rest[near]
            coll += rest.size - hit.size
            rest = rest[~near]
            if hit.size:
                eu.append(np.full(hit.size, u, dtype=np.int64))
                ev.append(hit)
                queue.extend(hit.tolist())
    return coll


def bucket_bfs(coords, order, starts, threshold):
    """Local BFS inside every bucket of a CSR bucket layout.

    Returns ``(eu, ev, collisions)``; edges are emitted in discovery order.
    """
    coords = np.asarray(coords, dtype=np.float64)
    order = np.asarray(order, dtype=np.int64)
    starts = np.asarray(starts, dtype=np.int64)
    eu: list[np.ndarray] = []
    ev: list[np.ndarray] = []
    coll = 0
    sizes = np.diff(starts)
    for b in np.flatnonzero(sizes > 1):
        coll += _bfs_bucket(coords, order[starts[b] : starts[b + 1]], threshold, eu, ev)
    if eu:
        return np.concatenate(eu), np.concatenate(ev).astype(np.int64), coll
    return np.empty(0, np.int64), np.empty(0, np.int64), coll


def hash_bfs(coords, proj, offsets, width, threshold):
    """Quantize projections, bucket by fingerprint, then run :func:`bucket_bfs`."""
    fp = fingerprint(quantize(proj, offsets, width))
    order = np.argsort(fp, kind="stable")
    sfp = fp[order]
    cut = np.flatnonzero(sfp[1:] != sfp[:-1]) + 1
    starts = np.concatenate(([0], cut, [len(fp)])).astype(np.int64)
    return bucket_bfs(coords, order, starts, threshold)


class Harvester:
    """Accumulates the deduplicated edges of many :func:`hash_bfs` rounds.

    Edge keys are ``min(u, v) * n + max(u, v)``.
    """

    def __init__(self, coords):
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        self.n = self.coords.shape[0]
        self._keys: set[int] = set()
        self.rounds = self.collisions = self.emitted = self.max_round_collisions = 0

    def run(self, directions, offsets, width, threshold):
        """One round with ``k`` hash directions; returns (edges emitted, collisions)."""
        proj = project(self.coords, np.asarray(directions, dtype=np.float64))
        eu, ev, coll = hash_bfs(self.coords, proj, offsets, width, threshold)
        if len(eu):
            self._keys.update((np.minimum(eu, ev) * self.n + np.maximum(eu, ev)).tolist())
        self.rounds += 1
        self.collisions += coll
        self.emitted += len(eu)
        self.max_round_collisions = max(self.max_round_collisions, coll)
        return len(eu), coll

    def __len__(self):
        return len(self._keys)

    def keys(self):
        return np.array(sorted(self._keys), dtype=np.int64)


def pair_extrema(coords):
    """Smallest and largest squared distance over all pairs i < j."""
    from .dataset import cross_sq_dists, iter_blocks

    n = coords.shape[0]
    lo, hi = np.inf, 0.0
    for sl in iter_blocks(n, n):
        blk = cross_sq_dists(coords[sl], coords[sl.start :])
        mask = np.arange(blk.shape[1])[None, :] > np.arange(blk.shape[0])[:, None]
        vals = blk[mask]
        if vals.size:
            lo = min(lo, float(vals.min()))
            hi = max(hi, float(vals.max()))
    return lo, hi


def kruskal_select(u, v, n):
    """Boolean mask of edges (already in processing order) kept by Kruskal."""
    parent = list(range(n))
    size = [1] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    keep = np.zeros(len(u), dtype=bool)
    joined = 0
    for i, (a, b) in enumerate(zip(u.tolist(), v.tolist())):
        ra, rb = find(a), find(b)
        if ra == rb:
            continue
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        keep[i] = True
        joined += 1
        if joined == n - 1:
            break
    return keep


def afn_candidates(qproj, ids, betas, count, m_cap):
    """First ``m_cap`` distinct ids when all streams are read in decreasing
    ``beta - <a_i, q>`` order (ties by id)."""
    keys = (betas[:, :count] - qproj[:, None]).ravel()
    flat = ids[:, :count].ravel()
    order = np.lexsort((flat, -keys))
    seq = flat[order]
    _, first = np.unique(seq, return_index=True)
    return seq[np.sort(first)][:m_cap]


def afn_query(coords, q, qproj, ids, betas, count, m_cap):
    cand = afn_candidates(qproj, ids, betas, count, m_cap)
    d2 = _sq_dist_to(coords, q, cand)
    j = np.lexsort((cand, -d2))[0]
    return int(cand[j]), float(np.sqrt(d2[j])), len(cand)


def afn_query_batch(coords, qids, qproj, ids, betas, count, m_cap):
    k = len(qids)
    best = np.empty(k, dtype=np.int64)
    dist = np.empty(k, dtype=np.float64)
    scanned = 0
    for i in range(k):
        best[i], dist[i], c = afn_query(coords, coords[qids[i]], qproj[i], ids, betas, count, m_cap)
        scanned += c
    return best, dist, scanned


def afn_merge(ids_l, betas_l, m_l, ids_s, betas_s, m_s, m_cap):
    """Top-``m_cap`` of the union of two sorted row sets, written into the large rows."""
    t = min(m_l + m_s, m_cap)
    if ids_l.shape[1] < t:
        raise ValueError("large cluster storage too small")
    ids = np.concatenate((ids_l[:, :m_l], ids_s[:, :m_s]), axis=1)
    b = np.concatenate((betas_l[:, :m_l], betas_s[:, :m_s]), axis=1)
    o = np.lexsort((ids, -b), axis=-1)[:, :t]
    ids_l[:, :t] = np.take_along_axis(ids, o, axis=1)
    betas_l[:, :t] = np.take_along_axis(b, o, axis=1)
    return t, int((o >= m_l).sum())
