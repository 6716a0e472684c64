"""Deterministic random streams

Every stream is a Philox counter generator keyed by a 64-bit seed and an
optional tuple of child keys, so a seed reproduces the same bits on every
platform.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """Seeded random stream with reproducible child streams"""

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(sequence))

    def child(self, key: int) -> RngStream:
        """Independent stream derived from this one's seed and key path"""
        return RngStream(self.seed, (*self.key, key))

    def uniform(self, shape) -> np.ndarray:
        """Doubles in [0, 1)"""
        return self._gen.random(shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, pool: np.ndarray, size: int) -> np.ndarray:
        """Sample ``size`` distinct entries of ``pool``"""
        return self._gen.choice(pool, size=size, replace=False)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"
