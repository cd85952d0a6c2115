"""
prng.py - Pinned pseudo-random generator

Every random draw in the toolkit (scene layout, category choice, anchor
injection, anchor shuffling) goes through SplitMix64 so outputs are the
same on every platform and Python version.
"""

import hashlib
import math
from typing import List, Sequence, TypeVar

T = TypeVar('T')

MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 with a few convenience draws on top."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.state = self.seed

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        # reject the tail that would bias the modulo
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def gauss(self) -> float:
        # Box-Muller; 1 - random() keeps the log argument in (0, 1]
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: Sequence[T]) -> List[T]:
        """Fisher-Yates over a copy; the input is left untouched."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def derive_seed(seed: int, *tags) -> int:
    """Deterministic 64-bit sub-seed for a named substream."""
    text = ":".join([str(seed & MASK64)] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], byteorder='big')
