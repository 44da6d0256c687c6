"""Seed-deterministic random primitives used by the scenario planners.

All randomness flows through a PCG64 stream (numpy's PCG64 bit generator,
which is the reference PCG implementation and produces identical output on
every platform). Platform-default generators such as `random.Random` are
deliberately not used so batch plans are reproducible across machines.
"""

from __future__ import annotations

import math

import numpy as np


class SeededStream:
    """A single named random stream derived from a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self) -> float:
        return float(self._gen.random())

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self._gen.integers(0, n))

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle, returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self._gen.integers(0, i + 1))
            out[i], out[j] = out[j], out[i]
        return out

    def sample_without_replacement(self, items: list, k: int) -> list:
        """First k elements of a Fisher-Yates shuffle (partial would do,
        full shuffle keeps the stream layout simple)."""
        return self.shuffle(items)[:k]

    def poisson(self, mean: float) -> int:
        """One Poisson draw.

        Knuth's product-of-uniforms for small means; for large means a
        normal approximation with rejection of negative draws, where exact
        sampling would burn one uniform per unit of the mean.
        """
        if mean <= 0:
            raise ValueError("poisson mean must be positive")
        if mean <= 30.0:
            limit = math.exp(-mean)
            k = 0
            p = 1.0
            while True:
                p *= self.uniform()
                if p <= limit:
                    return k
                k += 1
        sigma = math.sqrt(mean)
        while True:
            z = self._normal()
            n = math.floor(mean + sigma * z + 0.5)
            if n >= 0:
                return int(n)

    def poisson_positive(self, mean: float) -> int:
        """Poisson draw with zero redrawn (a zero-size batch is meaningless)."""
        while True:
            k = self.poisson(mean)
            if k > 0:
                return k

    def _normal(self) -> float:
        # Box-Muller on our own uniforms; keeps the stream consumption
        # independent of numpy's internal ziggurat tables.
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
