"""Seeded, dependency-free PRNG used everywhere determinism is promised.

The generator is SplitMix64. Given a 64-bit state s, each step is:

    s      = (s + 0x9E3779B97F4A7C15) mod 2^64
    z      = s
    z      = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z      = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output = z XOR (z >> 31)

Derived draws are defined bit-exactly so goldens stay stable:

* ``next_float`` = ``next_u64() >> 11`` scaled by 2^-53, uniform in [0, 1).
* ``below(n)``   = ``(next_u64() * n) >> 64`` (multiply-shift; the tiny
  modulo bias is irrelevant here and keeps the draw branch-free).
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        return (self.next_u64() * n) >> 64

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), order of selection preserved."""
        if k > n:
            raise ValueError("sample larger than population")
        picked: list[int] = []
        taken = set()
        while len(picked) < k:
            i = self.below(n)
            if i not in taken:
                taken.add(i)
                picked.append(i)
        return picked


def mix(seed: int, *parts: int) -> int:
    """Derive a substream seed from a base seed and integer labels.

    Feeds each part through one SplitMix64 step so substreams for
    neighbouring labels are decorrelated.
    """
    s = seed & MASK64
    for p in parts:
        s = SplitMix64(s ^ (p & MASK64)).next_u64()
    return s
