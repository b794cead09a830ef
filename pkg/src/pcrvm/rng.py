"""Seeded SplitMix64 stream with a fixed uniform/Gaussian consumption order.

The k-th raw output (k = 1, 2, ...) is ``mix(seed + k * GAMMA)`` modulo 2**64,
so blocks of outputs are computed in one vectorised step.  Uniforms take the
top 53 bits of an output; Gaussians use Box-Muller on consecutive uniform
pairs ``(u1, u2)``, emitting ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)`` then
the matching ``sin`` value.  A request for an odd number of Gaussians
discards the final ``sin`` value, so every call consumes an even number of
raw outputs.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SplitMix64"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 generator.

    >>> SplitMix64(0).next_uint64()
    16294208416658607535
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def raw(self, n: int) -> np.ndarray:
        """The next ``n`` 64-bit outputs."""
        k = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix(np.uint64(self.seed) + k * _GAMMA)

    def next_uint64(self) -> int:
        return int(self.raw(1)[0])

    def uniform(self, size=None, low=0.0, high=1.0):
        """Uniform draws on [low, high) from 53-bit mantissas."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None):
        """Standard normal draws via Box-Muller."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).ravel()[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def spawn(self, key: int) -> "SplitMix64":
        """Independent child stream seeded from this seed and ``key``."""
        child = SplitMix64(self.seed)
        child.counter = 0
        child.seed = int(_mix(np.array([(self.seed ^ (int(key) * 0xD1B54A32D192ED03)) & _MASK64], dtype=np.uint64))[0])
        return child
