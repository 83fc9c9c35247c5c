"""Point sets, ingestion, synthetic data and distance primitives.

All Euclidean distances in the package go through :func:`sq_dist_rows` or
:func:`cross_sq_dists`.  Both accumulate squared coordinate differences one
dimension at a time, in order, so a distance between the same two points is
bitwise identical no matter which routine (or compiled kernel) produced it.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, DuplicatePoints, EmptyInput, NonNumericField, RaggedRow
from .rng import STREAM_GENERATE, STREAM_JL, STREAM_SCALE_SAMPLE, stream

DEFAULT_EXACT_THRESHOLD = 20_000
SCALE_SAMPLE_SIZE = 2048
_BLOCK_ELEMS = 1 << 22


@dataclass(frozen=True)
class PointSet:
    """An immutable ``n x d`` array of finite coordinates; row index is the point id."""

    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.coords, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise DatasetError(f"coords must be a non-empty 2-d array, got shape {c.shape}")
        if not np.isfinite(c).all():
            raise DatasetError("coordinates must be finite")
        if c is self.coords:
            c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"PointSet(n={self.n}, d={self.d})"


@dataclass(frozen=True)
class DistanceScale:
    r_min: float
    r_max: float
    exact: bool

    def __post_init__(self):
        if not (0 < self.r_min <= self.r_max):
            raise ValueError(f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")

    @property
    def spread(self) -> float:
        return self.r_max / self.r_min


# ---------------------------------------------------------------- ingestion


def load_csv(path: str | os.PathLike, has_header: bool = False) -> PointSet:
    """Read one point per row. Row numbers in errors are 1-based file lines."""
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not rec or all(not f.strip() for f in rec):
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise RaggedRow(lineno, width, len(rec))
            vals = []
            for f in rec:
                try:
                    x = float(f)
                except ValueError:
                    raise NonNumericField(lineno, f) from None
                if not math.isfinite(x):
                    raise NonNumericField(lineno, f)
                vals.append(x)
            rows.append(vals)
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return PointSet(np.array(rows, dtype=np.float64))


def save_csv(ps: PointSet, dest) -> None:
    """Write points with round-trip precision to a path or an open text file."""
    if hasattr(dest, "write"):
        _write_rows(ps, dest)
        return
    with open(dest, "w", newline="") as fh:
        _write_rows(ps, fh)


def _write_rows(ps: PointSet, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    for row in ps.coords.tolist():
        w.writerow([repr(x) for x in row])


def generate_uniform(n: int, d: int, seed: int) -> PointSet:
    """``n`` points i.i.d. uniform on ``[0, 1]^d``.

    Reproducible as ``rng.stream(seed, STREAM_GENERATE).random((n, d))``.
    """
    if n < 1 or d < 1:
        raise DatasetError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    return PointSet(stream(seed, STREAM_GENERATE).random((n, d)))


def dedupe(ps: PointSet) -> tuple[PointSet, np.ndarray]:
    """Drop repeated points, keeping the first occurrence; returns kept ids."""
    _, first = np.unique(ps.coords, axis=0, return_index=True)
    keep = np.sort(first)
    return PointSet(ps.coords[keep]), keep


def standardize(ps: PointSet) -> PointSet:
    """Z-score each column (population std); constant columns are only centred."""
    c = ps.coords
    sd = c.std(axis=0)
    sd[sd == 0] = 1.0
    return PointSet((c - c.mean(axis=0)) / sd)


def jl_project(ps: PointSet, target_dim: int, seed: int) -> PointSet:
    if target_dim < 1:
        raise ValueError("target_dim must be >= 1")
    g = stream(seed, STREAM_JL).standard_normal((ps.d, target_dim))
    return PointSet(ps.coords @ g / math.sqrt(target_dim))


# ---------------------------------------------------------------- distances


def sq_dist_rows(coords: np.ndarray, u, v) -> np.ndarray:
    """Squared distances between paired rows ``coords[u[i]]`` and ``coords[v[i]]``."""
    a = coords[u]
    b = coords[v]
    diff = a[..., 0] - b[..., 0]
    acc = diff * diff
    for k in range(1, coords.shape[1]):
        diff = a[..., k] - b[..., k]
        acc += diff * diff
    return acc


def dist_rows(coords: np.ndarray, u, v) -> np.ndarray:
    return np.sqrt(sq_dist_rows(coords, np.asarray(u), np.asarray(v)))


def cross_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(len(a), len(b))`` squared distances between two coordinate blocks."""
    diff = a[:, None, 0] - b[None, :, 0]
    acc = diff * diff
    for k in range(1, a.shape[1]):
        diff = a[:, None, k] - b[None, :, k]
        acc += diff * diff
    return acc


def distance(ps: PointSet, u: int, v: int) -> float:
    for x in (u, v):
        if not 0 <= x < ps.n:
            raise IndexError(f"point id {x} out of range [0, {ps.n})")
    return float(math.sqrt(sq_dist_rows(ps.coords, np.array([u]), np.array([v]))[0]))


def pairwise_distances(ps: PointSet) -> np.ndarray:
    """Full ``n x n`` distance matrix (test oracles and small inputs only)."""
    return np.sqrt(cross_sq_dists(ps.coords, ps.coords))


def iter_blocks(n_rows: int, n_cols: int):
    """Yield row slices such that each block has at most ~4M cells."""
    step = max(1, _BLOCK_ELEMS // max(1, n_cols))
    for lo in range(0, n_rows, step):
        yield slice(lo, min(n_rows, lo + step))


def cross_extrema(coords: np.ndarray, a_ids: np.ndarray, b_ids: np.ndarray):
    """Min and max distance between two id sets, with the realising pairs.

    Returns ``(dmin, (ia, ib), dmax, (ja, jb))`` in point ids.
    """
    b = coords[b_ids]
    best_min = math.inf
    best_max = -math.inf
    pmin = pmax = None
    for sl in iter_blocks(len(a_ids), len(b_ids)):
        blk = cross_sq_dists(coords[a_ids[sl]], b)
        i = int(np.argmin(blk))
        r, c = divmod(i, blk.shape[1])
        if blk[r, c] < best_min:
            best_min = blk[r, c]
            pmin = (int(a_ids[sl][r]), int(b_ids[c]))
        i = int(np.argmax(blk))
        r, c = divmod(i, blk.shape[1])
        if blk[r, c] > best_max:
            best_max = blk[r, c]
            pmax = (int(a_ids[sl][r]), int(b_ids[c]))
    return math.sqrt(best_min), pmin, math.sqrt(best_max), pmax


# ---------------------------------------------------------------- scale


def find_duplicate(ps: PointSet) -> tuple[int, int] | None:
    _, inv, counts = np.unique(ps.coords, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    dup_groups = np.flatnonzero(counts > 1)
    if len(dup_groups) == 0:
        return None
    members = np.flatnonzero(inv == dup_groups[0])
    return int(members[0]), int(members[1])


def _brute_min_max(coords: np.ndarray) -> tuple[float, float]:
    from . import kernels

    lo, hi = kernels.pair_extrema(np.ascontiguousarray(coords))
    return math.sqrt(lo), math.sqrt(hi)


def estimate_scale_range(
    ps: PointSet,
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
    seed: int = 0,
) -> DistanceScale:
    """Bracket the minimum and maximum pairwise distance.

    Exact brute force when ``n <= exact_threshold``.  Otherwise ``r_max`` is
    twice the largest distance from point 0 (always an upper bound on the
    diameter) and ``r_min`` is a quarter of the closest pair inside a random
    sample of 2048 points (a heuristic lower bound).
    """
    if ps.n < 2:
        raise DatasetError("need at least two points to measure a distance scale")
    dup = find_duplicate(ps)
    if dup is not None:
        raise DuplicatePoints(*dup)
    if ps.n <= exact_threshold:
        lo, hi = _brute_min_max(ps.coords)
        return DistanceScale(lo, hi, exact=True)
    c = ps.coords
    far = float(dist_rows(c, np.zeros(ps.n, dtype=np.intp), np.arange(ps.n)).max())
    idx = stream(seed, STREAM_SCALE_SAMPLE).choice(ps.n, size=min(SCALE_SAMPLE_SIZE, ps.n), replace=False)
    lo, _ = _brute_min_max(c[np.sort(idx)])
    r_min = lo / 4.0
    r_max = max(2.0 * far, r_min)
    return DistanceScale(r_min, r_max, exact=False)
