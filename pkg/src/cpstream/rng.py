"""Deterministic substream derivation for reproducible simulations.

Every stochastic component draws from a Philox (counter-based) generator
keyed by a root seed plus an integer path, e.g. (replication,) or
(replication, node). Streams depend only on (seed, path), never on the
order in which they are consumed, so simulations give identical results at
any level of parallelism.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream"]


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``path`` under ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))
