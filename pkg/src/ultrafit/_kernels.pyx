# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free, calloc
from libc.stdint cimport uint64_t, int64_t, int32_t, uint32_t, uint8_t
from libc.string cimport memset

cdef extern from "_fingerprint.h" nogil:
    void uf_fingerprints(const double* proj, Py_ssize_t n, Py_ssize_t k, const double* ow,
                         double inv, const uint64_t* mult, uint64_t* out)
    void uf_hash_points(const double* coords, Py_ssize_t n, Py_ssize_t d, const double* dirs_t,
                        Py_ssize_t k, const double* ow, double inv, const uint64_t* mult,
                        double* acc, uint64_t* out)

from .lsh import FINGERPRINT_MULT

cnp.import_array()

BACKEND = "compiled"

cdef const uint64_t[::1] _MULT = FINGERPRINT_MULT


cdef inline int64_t _ifloor(double x) noexcept nogil:
    # floor for finite x in int64 range; avoids a libm call per coordinate
    # branch-free: the sign of a projection is a coin flip, so a branch mispredicts
    cdef int64_t q = <int64_t> x
    return q - (<double> q > x)


cdef inline double _sqd(const double[:, ::1] c, Py_ssize_t a, Py_ssize_t b, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0, t
    cdef Py_ssize_t k
    for k in range(d):
        t = c[a, k] - c[b, k]
        acc += t * t
    return acc


cdef Py_ssize_t _bfs_bucket(const double[:, ::1] c, int64_t* rest, Py_ssize_t size,
                            double thr, int64_t* queue, int64_t* eu, int64_t* ev,
                            Py_ssize_t ne, int64_t* coll) noexcept nogil:
    cdef Py_ssize_t d = c.shape[1]
    cdef Py_ssize_t lo = 0, hi = size, qh, qt, t, w
    cdef int64_t x, u, v
    while lo < hi:
        x = rest[lo]
        lo += 1
        qh = 0
        qt = 0
        queue[qt] = x
        qt += 1
        while qh < qt and lo < hi:
            u = queue[qh]
            qh += 1
            w = lo
            for t in range(lo, hi):
                v = rest[t]
                if sqrt(_sqd(c, u, v, d)) <= thr:
                    eu[ne] = u
                    ev[ne] = v
                    ne += 1
                    queue[qt] = v
                    qt += 1
                else:
                    rest[w] = v
                    w += 1
                    coll[0] += 1
            hi = w
    return ne


def bucket_bfs(const double[:, ::1] coords, const int64_t[::1] order, const int64_t[::1] starts, double threshold):
    cdef Py_ssize_t n = order.shape[0], nb = starts.shape[0] - 1, b, s, i, ne = 0
    cdef int64_t coll = 0
    out_u = np.empty(max(n, 1), dtype=np.int64)
    out_v = np.empty(max(n, 1), dtype=np.int64)
    cdef int64_t[::1] eu = out_u, ev = out_v
    cdef int64_t* rest = <int64_t*> malloc(max(n, 1) * sizeof(int64_t))
    cdef int64_t* queue = <int64_t*> malloc(max(n, 1) * sizeof(int64_t))
    try:
        with nogil:
            for b in range(nb):
                s = starts[b + 1] - starts[b]
                if s < 2:
                    continue
                for i in range(s):
                    rest[i] = order[starts[b] + i]
                ne = _bfs_bucket(coords, rest, s, threshold, queue, &eu[0], &ev[0], ne, &coll)
    finally:
        free(rest)
        free(queue)
    return out_u[:ne], out_v[:ne], int(coll)


ctypedef struct _Slot:
    uint64_t key
    int32_t head
    # a slot is live only when stamped with the current round
    uint32_t stamp


cdef class _BucketTable:
    """Reusable workspace: group points by bucket fingerprint, run Local-BFS.

    Buckets are open-addressing slots holding a chain of member ids through
    ``nxt``; only buckets with two or more members are expanded.
    """

    cdef Py_ssize_t n, cap
    cdef uint64_t mask
    cdef uint32_t stamp
    cdef _Slot* slots
    cdef int32_t* nxt
    cdef int64_t* multi
    cdef uint64_t* fp
    cdef int64_t* rest
    cdef int64_t* queue
    cdef int64_t* eu
    cdef int64_t* ev

    def __cinit__(self, Py_ssize_t n):
        cdef Py_ssize_t i
        if n >= 2**31 - 1:
            raise ValueError("too many points for the bucket table")
        self.n = n
        self.cap = 4
        while 2 * self.cap < 3 * n:
            self.cap <<= 1
        self.mask = self.cap - 1
        self.stamp = 0
        m = max(n, 1)
        self.slots = <_Slot*> calloc(self.cap, sizeof(_Slot))
        self.nxt = <int32_t*> malloc(m * sizeof(int32_t))
        self.multi = <int64_t*> malloc(m * sizeof(int64_t))
        self.fp = <uint64_t*> malloc(m * sizeof(uint64_t))
        self.rest = <int64_t*> malloc(m * sizeof(int64_t))
        self.queue = <int64_t*> malloc(m * sizeof(int64_t))
        self.eu = <int64_t*> malloc(m * sizeof(int64_t))
        self.ev = <int64_t*> malloc(m * sizeof(int64_t))
        if not (self.slots and self.nxt and self.multi and self.fp and self.rest and self.queue
                and self.eu and self.ev):
            raise MemoryError()

    def __dealloc__(self):
        free(self.slots); free(self.nxt); free(self.multi); free(self.fp); free(self.rest)
        free(self.queue); free(self.eu); free(self.ev)

    cdef Py_ssize_t group(self, const double[:, ::1] coords, double threshold, int64_t* coll) noexcept nogil:
        """Bucket points by ``self.fp`` and run Local-BFS; edges go to self.eu/self.ev."""
        cdef Py_ssize_t n = self.n, i, j, b, nm = 0, ne = 0, c
        cdef uint64_t h, slot
        cdef uint32_t stamp
        cdef int32_t x
        cdef _Slot* sl
        if self.stamp == 4294967295U:
            memset(self.slots, 0, self.cap * sizeof(_Slot))
            self.stamp = 0
        self.stamp += 1
        stamp = self.stamp
        for i in range(n):
            h = self.fp[i]
            slot = (h ^ (h >> 29)) & self.mask
            while self.slots[slot].stamp == stamp and self.slots[slot].key != h:
                slot = (slot + 1) & self.mask
            sl = &self.slots[slot]
            if sl.stamp != stamp:
                sl.key = h
                sl.stamp = stamp
                self.nxt[i] = -1
            else:
                if self.nxt[sl.head] == -1:
                    self.multi[nm] = slot
                    nm += 1
                self.nxt[i] = sl.head
            sl.head = <int32_t> i
        for b in range(nm):
            # chains run from the largest id down; store ascending
            x = self.slots[self.multi[b]].head
            c = 0
            while x != -1:
                self.rest[c] = x
                c += 1
                x = self.nxt[x]
            i = 0
            j = c - 1
            while i < j:
                self.rest[i], self.rest[j] = self.rest[j], self.rest[i]
                i += 1
                j -= 1
            ne = _bfs_bucket(coords, self.rest, c, threshold, self.queue, self.eu, self.ev, ne, coll)
        return ne


cdef double* _scaled_offsets(const double[::1] offsets, double width) noexcept nogil:
    cdef Py_ssize_t j
    cdef double* ow = <double*> malloc(max(offsets.shape[0], 1) * sizeof(double))
    if ow != NULL:
        for j in range(offsets.shape[0]):
            ow[j] = offsets[j] * width
    return ow


def hash_bfs(const double[:, ::1] coords, const double[:, ::1] proj, const double[::1] offsets,
             double width, double threshold):
    """Bucket points by quantised projections and run Local-BFS in each bucket."""
    cdef Py_ssize_t n = proj.shape[0], ne = 0, i
    cdef int64_t coll = 0
    if proj.shape[1] != offsets.shape[0] or coords.shape[0] != n:
        raise ValueError("projection, offset and point counts disagree")
    cdef _BucketTable tab = _BucketTable(n)
    cdef double* ow = _scaled_offsets(offsets, width)
    if ow == NULL:
        raise MemoryError()
    with nogil:
        if n:
            # multiply by the reciprocal, exactly as the numpy backend does
            uf_fingerprints(&proj[0, 0], n, proj.shape[1], ow, 1.0 / width, &_MULT[0], tab.fp)
            ne = tab.group(coords, threshold, &coll)
    free(ow)
    out_u = np.empty(ne, dtype=np.int64)
    out_v = np.empty(ne, dtype=np.int64)
    cdef int64_t[::1] eu = out_u, ev = out_v
    for i in range(ne):
        eu[i] = tab.eu[i]
        ev[i] = tab.ev[i]
    return out_u, out_v, int(coll)


cdef class Harvester:
    """Accumulates the deduplicated edges of many hash_bfs rounds.

    Edge keys are ``min(u, v) * n + max(u, v)``.
    """

    cdef const double[:, ::1] coords
    cdef _BucketTable tab
    cdef Py_ssize_t n
    cdef uint64_t* eset
    cdef Py_ssize_t ecap, ecount
    cdef int shift
    cdef public int64_t rounds, collisions, emitted, max_round_collisions

    def __cinit__(self, const double[:, ::1] coords):
        self.coords = coords
        self.n = coords.shape[0]
        self.tab = _BucketTable(self.n)
        self.ecap = 1 << 16
        self.shift = 64 - 16
        self.ecount = 0
        self.eset = <uint64_t*> calloc(self.ecap, sizeof(uint64_t))
        if not self.eset:
            raise MemoryError()

    def __dealloc__(self):
        free(self.eset)

    cdef int _grow(self) noexcept nogil:
        cdef Py_ssize_t old = self.ecap, i
        cdef uint64_t* prev = self.eset
        cdef uint64_t key, slot
        cdef uint64_t* fresh = <uint64_t*> calloc(2 * old, sizeof(uint64_t))
        if fresh == NULL:
            return -1
        self.eset = fresh
        self.ecap = 2 * old
        self.shift -= 1
        for i in range(old):
            key = prev[i]
            if key:
                slot = (key * <uint64_t> 0x9E3779B97F4A7C15) >> self.shift
                while self.eset[slot]:
                    slot = (slot + 1) & (self.ecap - 1)
                self.eset[slot] = key
        free(prev)
        return 0

    cdef Py_ssize_t _insert(self, Py_ssize_t ne) noexcept nogil:
        cdef Py_ssize_t i, fresh = 0
        cdef int64_t a, b
        cdef uint64_t key, slot
        for i in range(ne):
            a = self.tab.eu[i]
            b = self.tab.ev[i]
            if a > b:
                a, b = b, a
            key = <uint64_t> (a * self.n + b) + 1
            slot = (key * <uint64_t> 0x9E3779B97F4A7C15) >> self.shift
            while self.eset[slot] and self.eset[slot] != key:
                slot = (slot + 1) & (self.ecap - 1)
            if not self.eset[slot]:
                self.eset[slot] = key
                self.ecount += 1
                fresh += 1
                if 2 * self.ecount > self.ecap:
                    if self._grow() != 0:
                        return -1
        return fresh

    def run(self, const double[:, ::1] directions, const double[::1] offsets, double width, double threshold):
        """One round with ``k`` hash directions; returns (edges emitted, collisions)."""
        cdef int64_t coll = 0
        cdef Py_ssize_t ne = 0, fresh = 0, k = directions.shape[0], d = self.coords.shape[1], j, t
        if directions.shape[1] != d or offsets.shape[0] != k:
            raise ValueError("directions must be (k, d) with k offsets")
        cdef double* ow = _scaled_offsets(offsets, width)
        cdef double* dirs_t = <double*> malloc(max(k * d, 1) * sizeof(double))
        cdef double* acc = <double*> malloc(max(k, 1) * sizeof(double))
        if ow == NULL or dirs_t == NULL or acc == NULL:
            free(ow); free(dirs_t); free(acc)
            raise MemoryError()
        for j in range(k):
            for t in range(d):
                dirs_t[t * k + j] = directions[j, t]
        with nogil:
            if self.n:
                uf_hash_points(&self.coords[0, 0], self.n, d, dirs_t, k, ow, 1.0 / width, &_MULT[0],
                               acc, self.tab.fp)
                ne = self.tab.group(self.coords, threshold, &coll)
                fresh = self._insert(ne)
        free(ow); free(dirs_t); free(acc)
        if fresh < 0:
            raise MemoryError()
        self.rounds += 1
        self.collisions += coll
        self.emitted += ne
        if coll > self.max_round_collisions:
            self.max_round_collisions = coll
        return int(ne), int(coll)

    def __len__(self):
        return self.ecount

    def keys(self):
        """Sorted unique edge keys."""
        out = np.empty(self.ecount, dtype=np.int64)
        cdef int64_t[::1] o = out
        cdef Py_ssize_t i, j = 0
        for i in range(self.ecap):
            if self.eset[i]:
                o[j] = <int64_t> (self.eset[i] - 1)
                j += 1
        out.sort()
        return out


def pair_extrema(const double[:, ::1] coords):
    """Smallest and largest squared distance over all pairs i < j."""
    cdef Py_ssize_t n = coords.shape[0], d = coords.shape[1], i, j
    cdef double lo = INFINITY, hi = 0.0, acc
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = _sqd(coords, i, j, d)
                if acc < lo:
                    lo = acc
                if acc > hi:
                    hi = acc
    return lo, hi


cdef inline int64_t _find(int64_t* parent, int64_t x) noexcept nogil:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def kruskal_select(const int64_t[::1] u, const int64_t[::1] v, Py_ssize_t n):
    cdef Py_ssize_t m = u.shape[0], i, joined = 0
    keep_arr = np.zeros(m, dtype=np.uint8)
    cdef uint8_t[::1] keep = keep_arr
    cdef int64_t* parent = <int64_t*> malloc(max(n, 1) * sizeof(int64_t))
    cdef int64_t* size = <int64_t*> malloc(max(n, 1) * sizeof(int64_t))
    cdef int64_t ra, rb, t
    try:
        with nogil:
            for i in range(n):
                parent[i] = i
                size[i] = 1
            for i in range(m):
                if joined == n - 1:
                    break
                ra = _find(parent, u[i])
                rb = _find(parent, v[i])
                if ra == rb:
                    continue
                if size[ra] < size[rb]:
                    t = ra; ra = rb; rb = t
                parent[rb] = ra
                size[ra] += size[rb]
                keep[i] = 1
                joined += 1
    finally:
        free(parent)
        free(size)
    return keep_arr.astype(bool)


# ---------------------------------------------------------------- AFN

cdef inline bint _before(double ka, int64_t ia, double kb, int64_t ib) noexcept nogil:
    # stream order: larger key first, then smaller id
    return ka > kb or (ka == kb and ia < ib)


cdef Py_ssize_t _candidates(const double[::1] qproj, const int64_t[:, ::1] ids, const double[:, ::1] betas,
                            Py_ssize_t m, Py_ssize_t m_cap, int64_t* cand, uint8_t* seen,
                            double* hkey, int64_t* hid, int64_t* hrow, int64_t* hcol) noexcept nogil:
    cdef Py_ssize_t L = ids.shape[0], hs = 0, i, pos, child, nc = 0
    cdef double key
    cdef int64_t pid, row, col
    if m == 0:
        return 0
    # heapify row heads
    for i in range(L):
        key = betas[i, 0] - qproj[i]
        pid = ids[i, 0]
        pos = hs
        hs += 1
        while pos > 0 and _before(key, pid, hkey[(pos - 1) >> 1], hid[(pos - 1) >> 1]):
            hkey[pos] = hkey[(pos - 1) >> 1]; hid[pos] = hid[(pos - 1) >> 1]
            hrow[pos] = hrow[(pos - 1) >> 1]; hcol[pos] = hcol[(pos - 1) >> 1]
            pos = (pos - 1) >> 1
        hkey[pos] = key; hid[pos] = pid; hrow[pos] = i; hcol[pos] = 0
    while hs > 0 and nc < m_cap:
        pid = hid[0]
        row = hrow[0]
        col = hcol[0] + 1
        if not seen[pid]:
            seen[pid] = 1
            cand[nc] = pid
            nc += 1
        if col < m:
            key = betas[row, col] - qproj[row]
            pid = ids[row, col]
        else:
            hs -= 1
            key = hkey[hs]; pid = hid[hs]; row = hrow[hs]; col = hcol[hs]
        # sift down the replacement from the root
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= hs:
                break
            if child + 1 < hs and _before(hkey[child + 1], hid[child + 1], hkey[child], hid[child]):
                child += 1
            if _before(hkey[child], hid[child], key, pid):
                hkey[pos] = hkey[child]; hid[pos] = hid[child]
                hrow[pos] = hrow[child]; hcol[pos] = hcol[child]
                pos = child
            else:
                break
        if hs > 0:
            hkey[pos] = key; hid[pos] = pid; hrow[pos] = row; hcol[pos] = col
    for i in range(nc):
        seen[cand[i]] = 0
    return nc


cdef inline void _farthest(const double[:, ::1] coords, const double* q, int64_t* cand, Py_ssize_t nc,
                           int64_t* best_id, double* best_d2) noexcept nogil:
    cdef Py_ssize_t d = coords.shape[1], i, k
    cdef double acc, t
    best_id[0] = -1
    best_d2[0] = -1.0
    for i in range(nc):
        acc = 0.0
        for k in range(d):
            t = q[k] - coords[cand[i], k]
            acc += t * t
        if acc > best_d2[0] or (acc == best_d2[0] and cand[i] < best_id[0]):
            best_d2[0] = acc
            best_id[0] = cand[i]


def afn_query_batch(const double[:, ::1] coords, const int64_t[::1] qids, const double[:, ::1] qproj,
                    const int64_t[:, ::1] ids, const double[:, ::1] betas, Py_ssize_t count, Py_ssize_t m_cap):
    cdef Py_ssize_t nq = qids.shape[0], L = ids.shape[0], n = coords.shape[0], i, nc
    cdef int64_t scanned = 0
    best_arr = np.empty(nq, dtype=np.int64)
    dist_arr = np.empty(nq, dtype=np.float64)
    cdef int64_t[::1] best = best_arr
    cdef double[::1] dist = dist_arr
    cdef int64_t bid
    cdef double bd2
    cdef int64_t* cand = <int64_t*> malloc(max(m_cap, 1) * sizeof(int64_t))
    cdef uint8_t* seen = <uint8_t*> calloc(max(n, 1), sizeof(uint8_t))
    cdef double* hkey = <double*> malloc(max(L, 1) * sizeof(double))
    cdef int64_t* hid = <int64_t*> malloc(max(L, 1) * sizeof(int64_t))
    cdef int64_t* hrow = <int64_t*> malloc(max(L, 1) * sizeof(int64_t))
    cdef int64_t* hcol = <int64_t*> malloc(max(L, 1) * sizeof(int64_t))
    try:
        with nogil:
            for i in range(nq):
                nc = _candidates(qproj[i], ids, betas, count, m_cap, cand, seen, hkey, hid, hrow, hcol)
                _farthest(coords, &coords[qids[i], 0], cand, nc, &bid, &bd2)
                best[i] = bid
                dist[i] = sqrt(bd2)
                scanned += nc
    finally:
        free(cand); free(seen); free(hkey); free(hid); free(hrow); free(hcol)
    return best_arr, dist_arr, int(scanned)


def afn_query(const double[:, ::1] coords, const double[::1] q, const double[::1] qproj,
              const int64_t[:, ::1] ids, const double[:, ::1] betas, Py_ssize_t count, Py_ssize_t m_cap):
    cdef Py_ssize_t L = ids.shape[0], n = coords.shape[0], nc
    cdef int64_t bid
    cdef double bd2
    cdef int64_t* cand = <int64_t*> malloc(max(m_cap, 1) * sizeof(int64_t))
    cdef uint8_t* seen = <uint8_t*> calloc(max(n, 1), sizeof(uint8_t))
    cdef double* hkey = <double*> malloc(max(L, 1) * sizeof(double))
    cdef int64_t* hid = <int64_t*> malloc(max(L, 1) * sizeof(int64_t))
    cdef int64_t* hrow = <int64_t*> malloc(max(L, 1) * sizeof(int64_t))
    cdef int64_t* hcol = <int64_t*> malloc(max(L, 1) * sizeof(int64_t))
    try:
        nc = _candidates(qproj, ids, betas, count, m_cap, cand, seen, hkey, hid, hrow, hcol)
        _farthest(coords, &q[0], cand, nc, &bid, &bd2)
    finally:
        free(cand); free(seen); free(hkey); free(hid); free(hrow); free(hcol)
    return int(bid), float(sqrt(bd2)), int(nc)


def afn_merge(int64_t[:, ::1] ids_l, double[:, ::1] betas_l, Py_ssize_t m_l,
              const int64_t[:, ::1] ids_s, const double[:, ::1] betas_s, Py_ssize_t m_s, Py_ssize_t m_cap):
    """Insert the first ``m_s`` entries of each small row into the large row in place.

    Rows are sorted by (beta desc, id asc) and keep at most ``m_cap`` entries;
    ``ids_l`` must have room for ``min(m_l + m_s, m_cap)`` columns.  Returns
    the new row length and the number of small entries that were kept.
    """
    cdef Py_ssize_t L = ids_l.shape[0], i, j, cur, lo, hi, mid, k
    cdef int64_t moved = 0
    cdef double b
    cdef int64_t x
    t = min(m_l + m_s, m_cap)
    if ids_l.shape[1] < t:
        raise ValueError("large cluster storage too small")
    with nogil:
        for i in range(L):
            cur = m_l
            for j in range(m_s):
                b = betas_s[i, j]
                x = ids_s[i, j]
                if cur == m_cap and not _before(b, x, betas_l[i, cur - 1], ids_l[i, cur - 1]):
                    break
                lo = 0
                hi = cur
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if _before(b, x, betas_l[i, mid], ids_l[i, mid]):
                        hi = mid
                    else:
                        lo = mid + 1
                k = cur if cur < m_cap else m_cap - 1
                while k > lo:
                    betas_l[i, k] = betas_l[i, k - 1]
                    ids_l[i, k] = ids_l[i, k - 1]
                    k -= 1
                betas_l[i, lo] = b
                ids_l[i, lo] = x
                if cur < m_cap:
                    cur += 1
                moved += 1
    return t, int(moved)
