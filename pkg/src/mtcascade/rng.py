"""Counter-based splitmix64 stream.

Word ``i`` of the stream seeded with ``seed`` depends only on ``(seed, i)``,
so any slice of the stream can be produced independently (vectorised in
numpy, in the compiled kernel, or on another worker) and stays bit-identical
across platforms and numpy versions.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def splitmix64(seed: int, counter: int) -> int:
    z = (seed + (counter + 1) * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64_array(seed: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream as ``uint64``."""
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + counters * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Sequential reader over the stream, refilled in vectorised blocks."""

    def __init__(self, seed: int, block: int = 256):
        self.seed = check_seed(seed)
        self.block = block
        self.counter = 0
        self._buf: list[int] = []
        self._pos = 0

    def next_u64(self) -> int:
        if self._pos == len(self._buf):
            self._buf = splitmix64_array(self.seed, self.counter, self.block).tolist()
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        self.counter += 1
        return out

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound


def fisher_yates(n: int, seed: int) -> list[int]:
    """Permutation of ``range(n)`` by the Durstenfeld variant of Fisher-Yates."""
    rng = SplitMix64(seed, block=max(n, 1))
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
