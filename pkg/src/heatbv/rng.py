"""Counter-based random streams keyed by ``(seed, key...)``.

Every block of Monte Carlo paths draws from its own Philox stream, so the
numbers a block sees depend only on the seed and the block index, never on
how blocks are scheduled across workers.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, size: int):
    """``(index, start, stop)`` triples covering ``range(n)`` in fixed order."""
    if size <= 0:
        raise ValueError("block size must be positive")
    return [(i, s, min(s + size, n)) for i, s in enumerate(range(0, n, size))]


def as_seed(rng) -> int:
    """Accept an integer seed or a Generator (from which a seed is drawn)."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        return 0
    return int(rng)
