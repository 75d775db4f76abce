"""Seeded random streams keyed by task coordinates.

Every unit of work (a fold/learner fit, a Monte Carlo replicate, a batch of
Gaussian draws) gets its own ``numpy.random.Generator`` derived from the
master seed and a tuple of integer keys.  Results therefore do not depend on
how work is scheduled across processes.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) & (2**63 - 1)
