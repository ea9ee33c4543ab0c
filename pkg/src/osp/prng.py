"""Pinned deterministic PRNG for reproducible sampling.

SplitMix64: a 64-bit counter-based generator (a Weyl sequence stepped by
0x9E3779B97F4A7C15 and passed through a two-round multiply/xor-shift
finalizer).  The algorithm is frozen here and in docs/prng.md with test
vectors produced by an independent C implementation, so samples drawn
today re-extract bit-identically on any platform and in any language.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic stream of 64-bit words from a 64-bit seed."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) without modulo bias.

        Rejection sampling: draws above the largest multiple of ``bound``
        that fits in 64 bits are discarded.
        """
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound

    def unit(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53
