"""Deterministic pseudo-random numbers (splitmix64) for test matrices and sampling."""

import math

import numpy as np

_MASK = (1 << 64) - 1

DEFAULT_SEED = 20240611


class SplitMix64:
    """The splitmix64 generator; identical streams on every platform."""

    def __init__(self, seed=DEFAULT_SEED):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self):
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo=0.0, hi=1.0, size=None):
        if size is None:
            return lo + (hi - lo) * self.random()
        n = int(np.prod(size))
        return np.array([lo + (hi - lo) * self.random() for _ in range(n)]).reshape(size)

    def integer(self, n):
        """Uniform integer in 0..n-1 (rejection sampling, no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal(self, size=None):
        """Standard normals by the Box-Muller transform."""
        def one():
            u1 = 1.0 - self.random()
            u2 = self.random()
            return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

        if size is None:
            return one()
        n = int(np.prod(size))
        return np.array([one() for _ in range(n)]).reshape(size)

    def sample(self, n, k):
        """k distinct integers from 0..n-1 (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        pool = list(range(n))
        for i in range(k):
            j = i + self.integer(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def antisymmetric(self, n, scale=1.0):
        """Random real antisymmetric n x n matrix."""
        m = self.normal((n, n)) * scale
        return m - m.T

    def stable_matrix(self, n, shift=2.0, scale=0.5):
        """-shift I plus a random strictly upper triangular part."""
        m = np.triu(self.normal((n, n)) * scale, 1)
        return m - shift * np.eye(n)
