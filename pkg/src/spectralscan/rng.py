"""Deterministic xorshift64* stream used for every seeded fixture and weight draw.

The update is the classic xorshift64* step:

    state ^= state >> 12
    state ^= state << 25
    state ^= state >> 27
    output = state * 0x2545F4914F6CDD1D      (mod 2^64)

Floats are the top 24 bits of the output divided by 2^24, so every draw is
exactly representable in binary32 as well as binary64. A zero seed is
remapped to 0x9E3779B97F4A7C15 because the all-zero state is a fixed point.
"""

from __future__ import annotations

import numpy as np

from . import backends

MASK64 = (1 << 64) - 1
ZERO_SEED_REPLACEMENT = 0x9E3779B97F4A7C15
OUTPUT_MULTIPLIER = 0x2545F4914F6CDD1D


class Xorshift64Star:
    """Stateful generator; identical output across the compiled and pure backends."""

    def __init__(self, seed: int):
        seed &= MASK64
        self.state = seed if seed != 0 else ZERO_SEED_REPLACEMENT

    def next_u64(self) -> int:
        s = self.state
        s ^= s >> 12
        s = (s ^ (s << 25)) & MASK64
        s ^= s >> 27
        self.state = s
        return (s * OUTPUT_MULTIPLIER) & MASK64

    def next_float(self) -> float:
        return (self.next_u64() >> 40) / 16777216.0

    def floats(self, count: int) -> np.ndarray:
        """Vector of `count` draws in [0, 1), advancing the stream."""
        out, self.state = backends.xorshift_fill(self.state, count)
        return out
