"""Pure numpy implementation of the sign-flip counting loops.

Performs the same floating-point operations, in the same order, as the
compiled ``_permkernel`` so counts agree exactly.
"""

from __future__ import annotations

import numpy as np

from .rng import splitmix64_array

_CHUNK = 1 << 16


def _subset_sums(d: np.ndarray) -> np.ndarray:
    t = np.zeros(1)
    for x in d:
        t = np.concatenate([t + x, t - x])
    return t


def exact_count(d: np.ndarray, threshold: float) -> int:
    d = np.asarray(d, dtype=np.float64)
    h = len(d) // 2
    low = _subset_sums(d[:h])
    high = _subset_sums(d[h:])
    rows = max(1, _CHUNK * 16 // len(low))
    count = 0
    for start in range(0, len(high), rows):
        block = high[start:start + rows, None] + low[None, :]
        count += int(np.count_nonzero(np.abs(block) >= threshold))
    return count


def monte_carlo_count(d: np.ndarray, seed: int, start: int, iterations: int, threshold: float) -> int:
    d = np.asarray(d, dtype=np.float64)
    n = len(d)
    wpi = (n + 63) // 64
    count = 0
    for lo in range(start, start + iterations, _CHUNK):
        m = min(_CHUNK, start + iterations - lo)
        words = splitmix64_array(seed, lo * wpi, m * wpi).reshape(m, wpi)
        s = np.zeros(m)
        for i in range(n):
            bits = (words[:, i // 64] >> np.uint64(i % 64)) & np.uint64(1)
            s = np.where(bits.astype(bool), s - d[i], s + d[i])
        count += int(np.count_nonzero(np.abs(s) >= threshold))
    return count
