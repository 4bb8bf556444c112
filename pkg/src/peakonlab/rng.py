"""SplitMix64 generator for bit-reproducible experiments.

Perturbation draws must be identical across platforms and numpy versions, so
experiments use this tiny 64-bit generator instead of numpy's RNG.
"""

from __future__ import annotations

__all__ = ["SplitMix64"]

_MASK = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit generator (splitmix64 update + finalizer)."""

    def __init__(self, seed):
        self._state = int(seed) & _MASK

    def next_u64(self):
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, low=0.0, high=1.0):
        u = (self.next_u64() >> 11) * 2.0**-53
        return low + (high - low) * u

    def symmetric(self, scale=1.0):
        return self.uniform(-scale, scale)
