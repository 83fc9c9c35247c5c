"""Seeded random streams.

Every random draw in the package comes from a generator built as::

    np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=path))

where ``path`` is a tuple of small integers naming the consumer (see the
``STREAM_*`` constants) followed by any per-call indices, e.g. the LSH
repetition index.  SeedSequence hashes (entropy, spawn_key) into independent
PCG64 states, so distinct paths give independent streams and the same seed
always reproduces the same run.
"""

from __future__ import annotations

import numpy as np

STREAM_GENERATE = 0
STREAM_JL = 1
STREAM_LSH = 2
STREAM_AFN = 3
STREAM_SCALE_SAMPLE = 4

_SEED_MASK = (1 << 64) - 1


def stream(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)
