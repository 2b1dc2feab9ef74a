"""Seeded splitmix64 random streams.

Every source of randomness in the package (parameter init, scene
generation, gradient-check probes) draws from one of these streams, so a
run is fully reproduced by its integer seed. Streams can be forked by
label, which keeps parameter init independent of declaration order.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO53 = float(1 << 53)


def _mix(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * _MIX1) & _M64
    z = ((z ^ (z >> 27)) * _MIX2) & _M64
    return z ^ (z >> 31)


def _mix_block(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def _fnv1a(label: str) -> int:
    h = 0xCBF29CE484222325
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _M64
    return h


class SplitMix64:
    """Counter-based 64-bit generator with a fixed, platform-independent
    output sequence."""

    def __init__(self, seed: int):
        self._state = seed & _M64

    def fork(self, label: str) -> "SplitMix64":
        """Independent child stream identified by ``label``."""
        return SplitMix64(_mix((self._state ^ _fnv1a(label)) * _GAMMA + _GAMMA))

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _M64
        return _mix(self._state)

    def u64_block(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            counters = np.uint64(self._state) + np.uint64(_GAMMA) * np.arange(
                1, n + 1, dtype=np.uint64
            )
        self._state = (self._state + _GAMMA * n) & _M64
        return _mix_block(counters)

    def integers(self, low: int, high: int, size=None):
        """Uniform ints in [low, high). Modulo draw; fine for non-crypto use."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        span = high - low
        if size is None:
            return low + self.next_u64() % span
        n = int(np.prod(size))
        vals = (self.u64_block(n) % np.uint64(span)).astype(np.int64) + low
        return vals.reshape(size)

    def uniform(self, size=None):
        """Uniform floats in (0, 1]."""
        if size is None:
            return (float(self.next_u64() >> 11) + 1.0) / _TWO53
        n = int(np.prod(size))
        vals = ((self.u64_block(n) >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53
        return vals.reshape(size)

    def normal(self, size=None, scale: float = 1.0):
        """Standard normals via Box-Muller."""
        if size is None:
            return float(self.normal(size=1, scale=scale)[0])
        n = int(np.prod(size))
        half = (n + 1) // 2
        u1 = np.asarray(self.uniform(size=half), dtype=np.float64)
        u2 = np.asarray(self.uniform(size=half), dtype=np.float64)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        vals = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (vals * scale).reshape(size)

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.integers(0, i + 1)
            seq[i], seq[j] = seq[j], seq[i]
