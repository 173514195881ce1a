"""Portable counter-based random number generation.

All randomness in this package flows through `Rng`, a SplitMix64 generator
run in counter mode: draw i of stream s is a pure function of (seed_s, i).
Streams for distinct purposes (init, shuffling, channel noise, ...) are
derived from a master seed and a text label, so consuming extra draws in
one stream never shifts another. Gaussians use the Box-Muller transform.

Nothing here depends on platform RNG state, so runs are reproducible
bit-for-bit given the seed.
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        return x ^ (x >> np.uint64(31))


def derive_seed(seed: int, label: str) -> int:
    """Derive a child seed from (seed, label), FNV-1a over the label bytes."""
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    mixed = _mix64(np.uint64((seed ^ h) & 0xFFFFFFFFFFFFFFFF).reshape(1))
    return int(mixed[0])


class Rng:
    """SplitMix64 stream in counter mode.

    Each call consumes a contiguous block of counters, so the sequence of
    values depends only on the seed and the cumulative number of draws,
    never on call granularity.
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def spawn(self, label: str) -> "Rng":
        """Independent child stream for a named purpose."""
        return Rng(derive_seed(int(self._seed), label))

    def raw64(self, count: int) -> np.ndarray:
        """Next `count` raw uint64 words."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        idx = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        with np.errstate(over="ignore"):
            return _mix64(self._seed + idx * _GOLDEN)

    def uniform(self, shape=()) -> np.ndarray:
        """float64 in [0, 1), 53 usable bits per draw."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        # top 53 bits scaled into [0, 1)
        u = (self.raw64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape=()) -> np.ndarray:
        """Standard normals via Box-Muller on uniform pairs."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        u1 = 1.0 - self.uniform((pairs,))  # (0, 1], keeps log finite
        u2 = self.uniform((pairs,))
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if shape else z[0]

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n) by sorting one random key per index."""
        keys = self.raw64(n)
        return np.argsort(keys, kind="stable")
