"""Deterministic, splittable random streams.

Every Monte Carlo consumer derives its generator from ``(seed, *key)`` via
:class:`numpy.random.SeedSequence`, so results never depend on how work is
split across threads or processes.
"""

from __future__ import annotations

import numpy as np

#: Trials are grouped in fixed-size blocks, one substream per block.
BLOCK_SIZE = 4096


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for ``key`` under ``seed``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """Split ``range(n)`` into ``(block_id, start, stop)`` triples."""
    return [(b, s, min(s + block_size, n)) for b, s in enumerate(range(0, n, block_size))]
