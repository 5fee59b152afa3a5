"""Derivation of independent, reproducible RNG streams from one experiment seed."""

from __future__ import annotations

import numpy as np

# Stream tags keep the consumers of one experiment seed statistically
# independent of each other (and of worker scheduling).
INIT_PARAMS = 0
SELECT = 1
LOCAL_TRAIN = 2
ANNEAL = 3
SPLIT = 4
SHARD = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *key).

    The same (seed, key) always yields the same stream; different keys yield
    independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))
