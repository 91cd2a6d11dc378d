"""Seeded splitmix64 generator.

splitmix64 is counter based (output ``i`` is ``mix(seed + (i + 1) * GAMMA)``),
so large blocks are produced in one vectorized numpy expression.
"""

from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, *keys: int | str) -> int:
    """Fan a global seed out to a sub-stream seed keyed by names and indices."""
    h = mix64(seed + GAMMA)
    for key in keys:
        k = fnv1a64(key.encode("utf-8")) if isinstance(key, str) else int(key) & MASK64
        h = mix64(h ^ k ^ GAMMA)
    return h


class Rng:
    """A small numpy-Generator-like facade over splitmix64."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self, n: int) -> np.ndarray:
        counters = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + counters * np.uint64(GAMMA)
        self.state = (self.state + n * GAMMA) & MASK64
        return _mix_array(z)

    def _shape(self, size):
        if size is None:
            return 1, None
        shape = (size,) if np.isscalar(size) else tuple(size)
        return int(np.prod(shape)), shape

    @staticmethod
    def _out(values: np.ndarray, shape):
        return float(values[0]) if shape is None else values.reshape(shape)

    def random(self, size=None):
        """Uniform doubles in [0, 1)."""
        n, shape = self._shape(size)
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return self._out(u, shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        n, shape = self._shape(size)
        u = low + (high - low) * self.random(n)
        return self._out(u, shape)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high)."""
        n, shape = self._shape(size)
        span = high - low
        if span <= 0:
            raise ValueError("empty integer range")
        v = low + np.floor(self.random(n) * span).astype(np.int64)
        v = np.minimum(v, high - 1)
        return int(v[0]) if shape is None else v.reshape(shape)

    def normal(self, loc=0.0, scale=1.0, size=None):
        n, shape = self._shape(size)
        m = (n + 1) // 2
        u1 = ((self.next_u64(m) >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        return self._out(loc + scale * z, shape)

    def permutation(self, n: int) -> np.ndarray:
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.random(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def gamma(self, shape: float, size=None):
        """Gamma(shape, 1) by Marsaglia-Tsang rejection."""
        if shape <= 0:
            raise ValueError("gamma shape must be positive")
        n, out_shape = self._shape(size)
        boost = shape < 1.0
        k = shape + 1.0 if boost else shape
        d = k - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(0)
        while out.size < n:
            want = max(16, int(1.2 * (n - out.size)) + 8)
            x = self.normal(size=want)
            u = self.random(want)
            v = (1.0 + c * x) ** 3
            ok = v > 0
            with np.errstate(invalid="ignore", divide="ignore"):
                ok &= np.log(np.where(u > 0, u, 1e-300)) < 0.5 * x * x + d - d * v + d * np.log(np.where(ok, v, 1.0))
            out = np.concatenate([out, d * v[ok]])
        out = out[:n]
        if boost:
            u = self.random(n)
            out = out * np.where(u > 0, u, 2.0**-53) ** (1.0 / shape)
        return self._out(out, out_shape)

    def beta(self, a: float, b: float, size=None):
        n, shape = self._shape(size)
        x = self.gamma(a, n)
        y = self.gamma(b, n)
        return self._out(x / (x + y), shape)
