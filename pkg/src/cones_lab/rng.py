"""Deterministic random numbers on a fixed, documented generator.

The stream is counter-based SplitMix64: draw ``i`` is a pure integer hash of
``(seed, i)``, so the sequence is reproducible across runs and platforms and
arbitrary-length batches can be generated vectorized.  Gaussians come from
Box-Muller over consecutive uniform pairs.
"""

from __future__ import annotations

import numpy as np

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _mix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U64(30))
    z = z * _MIX1
    z = z ^ (z >> _U64(27))
    z = z * _MIX2
    return z ^ (z >> _U64(31))


def _hash_tag(tag) -> int:
    """FNV-1a over the utf-8 form of the tag, for spawning child streams."""
    h = 0xCBF29CE484222325
    for b in str(tag).encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _mix_int(z: int) -> int:
    """Same mixing as _mix, in plain python integers (scalar path)."""
    z &= 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0xFFFFFFFFFFFFFFFF


class Rng:
    """SplitMix64 stream seeded by a 64-bit integer."""

    def __init__(self, seed: int, _counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._counter = int(_counter)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix(_U64(self.seed) + idx * _PHI)

    def random(self, shape=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1) with 53-bit resolution."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self._raw(n) >> _U64(11)).astype(np.float64) * (2.0 ** -53)
        return float(u[0]) if shape is None else u.reshape(shape)

    def uniform(self, low: float, high: float, shape=None):
        return low + (high - low) * self.random(shape)

    def normal(self, mean: float = 0.0, std: float = 1.0, shape=None):
        n = 1 if shape is None else int(np.prod(shape))
        pairs = (n + 1) // 2
        # u1 shifted into (0, 1] so log never sees zero
        raw = self._raw(2 * pairs)
        u1 = ((raw[0::2] >> _U64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (raw[1::2] >> _U64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = mean + std * z
        return float(z[0]) if shape is None else z.reshape(shape)

    def integers(self, low: int, high: int, shape=None):
        """Integers in [low, high). Derived from the uniform stream."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        span = high - low
        vals = np.floor(self.random(shape if shape is not None else (1,)) * span).astype(np.int64)
        vals = np.minimum(vals, span - 1) + low
        return int(vals[0]) if shape is None else vals

    def choice(self, n: int, size: int) -> np.ndarray:
        return self.integers(0, n, (size,))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(0, i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self, tag) -> "Rng":
        """Independent child stream; same (seed, tag) always gives the same child."""
        child = _mix_int((self.seed ^ _hash_tag(tag)) + 0x9E3779B97F4A7C15)
        return Rng(child)
