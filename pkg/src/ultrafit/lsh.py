"""p-stable (Gaussian) locality-sensitive hashing with analytic calibration.

One atomic hash is ``floor((<g, p> + b) / (w R))`` with ``g ~ N(0, I)`` and
``b ~ U[0, w R)``.  ``concat_k`` atomic hashes are concatenated into a bucket
key and ``repetitions`` independent keys are drawn per radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import PointSet
from .rng import STREAM_LSH, stream

DEFAULT_WIDTH = 4.0

# odd 64-bit multipliers for folding a k-tuple of bucket coordinates into one
# fingerprint; fixed so fingerprints are stable across runs and backends
_MULT_RNG = np.random.default_rng(0x5EED_1E55)
FINGERPRINT_MULT = (_MULT_RNG.integers(0, 2**63, size=4096, dtype=np.uint64) * np.uint64(2) + np.uint64(1))


def collision_probability(s: float, w: float = DEFAULT_WIDTH) -> float:
    """Probability that one atomic hash of width ``w`` collides at distance ``s``.

    Both arguments are in units of the radius R.
    """
    if w <= 0:
        raise ValueError("bucket width must be positive")
    if s < 0:
        raise ValueError("distance ratio must be non-negative")
    if s == 0:
        return 1.0
    r = w / s
    return 1.0 - math.erfc(r / math.sqrt(2.0)) - 2.0 / (math.sqrt(2.0 * math.pi) * r) * (1.0 - math.exp(-r * r / 2.0))


@dataclass(frozen=True)
class LshParams:
    radius: float
    c: float
    width: float
    concat_k: int
    repetitions: int
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0 or self.c <= 1 or self.concat_k < 1 or self.repetitions < 1 or self.width <= 0:
            raise ValueError(f"invalid LSH parameters {self}")

    @property
    def p_near(self) -> float:
        """Per-repetition collision probability at distance R."""
        return collision_probability(1.0, self.width) ** self.concat_k

    @property
    def p_far(self) -> float:
        return collision_probability(self.c, self.width) ** self.concat_k

    def at_radius(self, radius: float) -> "LshParams":
        return replace(self, radius=radius)


def calibrate(
    n: int,
    gamma: float,
    w: float = DEFAULT_WIDTH,
    safety: float = 1.0,
    radius: float = 1.0,
    seed: int = 0,
) -> LshParams:
    """Pick ``concat_k`` so far pairs collide w.p. <= 1/n and enough
    repetitions that a near pair is missed w.p. <= n^-3 (for safety >= 1)."""
    if n < 2:
        raise ValueError("calibration needs n >= 2")
    if gamma <= 1:
        raise ValueError(f"gamma must be > 1, got {gamma}")
    if safety <= 0:
        raise ValueError("safety must be positive")
    p_far = collision_probability(gamma, w)
    p_near = collision_probability(1.0, w)
    k = max(1, math.ceil(math.log(n) / -math.log(p_far)))
    while p_far**k > 1.0 / n:
        k += 1
    while k > 1 and p_far ** (k - 1) <= 1.0 / n:
        k -= 1
    reps = math.ceil(safety * 3.0 * math.log(n) / p_near**k)
    return LshParams(radius=radius, c=gamma, width=w, concat_k=k, repetitions=max(1, reps), seed=seed)


def hash_directions(seed: int, repetition_index: int, k: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian directions ``(k, d)`` and offsets ``(k,)`` as fractions of one bucket.

    They depend only on the seed and repetition index, so the same atomic
    projections are reused at every radius.
    """
    g = stream(seed, STREAM_LSH, repetition_index)
    return g.standard_normal((k, d)), g.random(k)


def project(coords: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """``(n, k)`` projections, summed dimension by dimension.

    The fixed summation order (rather than BLAS) lets the compiled harvester
    recompute identical values on the fly.
    """
    acc = coords[:, 0:1] * directions[:, 0]
    for t in range(1, coords.shape[1]):
        acc += coords[:, t : t + 1] * directions[:, t]
    return acc


def quantize(proj: np.ndarray, offsets: np.ndarray, width: float) -> np.ndarray:
    # multiply by the reciprocal (as the compiled kernel does) so both agree bitwise
    return np.floor((proj + offsets * width) * (1.0 / width)).astype(np.int64)


def fingerprint(keys: np.ndarray) -> np.ndarray:
    k = keys.shape[1]
    with np.errstate(over="ignore"):
        return (keys.astype(np.uint64) * FINGERPRINT_MULT[:k]).sum(axis=1, dtype=np.uint64)


@dataclass
class HashedBuckets:
    """Points grouped by their concatenated bucket key."""

    keys: np.ndarray  # (n, k) int64 bucket coordinates

    def groups(self) -> dict[tuple, list[int]]:
        out: dict[tuple, list[int]] = {}
        for i, row in enumerate(map(tuple, self.keys.tolist())):
            out.setdefault(row, []).append(i)
        return out

    def to_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Ids grouped by bucket (ascending within a bucket) and bucket offsets."""
        _, inv = np.unique(self.keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        order = np.argsort(inv, kind="stable")
        counts = np.bincount(inv)
        starts = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        return order.astype(np.int64), starts

    def __len__(self) -> int:
        return len(np.unique(self.keys, axis=0))


def hash_points(ps: PointSet, params: LshParams, repetition_index: int) -> HashedBuckets:
    if not 0 <= repetition_index < params.repetitions:
        raise ValueError(f"repetition index {repetition_index} outside [0, {params.repetitions})")
    dirs, offs = hash_directions(params.seed, repetition_index, params.concat_k, ps.d)
    width = params.width * params.radius
    return HashedBuckets(quantize(project(ps.coords, dirs), offs, width))
