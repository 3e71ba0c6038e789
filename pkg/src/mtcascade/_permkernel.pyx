# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sign-flip counting loops for the paired permutation test.

Arithmetic mirrors ``_permfallback`` operation for operation so both
backends return identical counts.
"""

from libc.math cimport fabs
from libc.stdlib cimport free, malloc

ctypedef unsigned long long u64

cdef u64 GOLDEN = 0x9E3779B97F4A7C15ULL
cdef u64 MIX1 = 0xBF58476D1CE4E5B9ULL
cdef u64 MIX2 = 0x94D049BB133111EBULL


cdef inline u64 _splitmix64(u64 seed, u64 counter) nogil:
    cdef u64 z = seed + (counter + 1) * GOLDEN
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef double* _subset_sums(const double[:] d, Py_ssize_t lo, Py_ssize_t hi) except NULL:
    cdef Py_ssize_t m = hi - lo
    cdef Py_ssize_t size = (<Py_ssize_t>1) << m
    cdef double* t = <double*>malloc(size * sizeof(double))
    cdef Py_ssize_t j, i, length
    cdef double x
    if t == NULL:
        raise MemoryError()
    t[0] = 0.0
    length = 1
    for j in range(m):
        x = d[lo + j]
        for i in range(length):
            t[i + length] = t[i] - x
            t[i] = t[i] + x
        length <<= 1
    return t


def exact_count(const double[:] d, double threshold):
    """Number of the ``2**n`` sign vectors with ``|sum| >= threshold``."""
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t h = n // 2
    cdef Py_ssize_t nlow = (<Py_ssize_t>1) << h
    cdef Py_ssize_t nhigh = (<Py_ssize_t>1) << (n - h)
    cdef double* low = _subset_sums(d, 0, h)
    cdef double* high = NULL
    cdef Py_ssize_t a, b
    cdef double hb
    cdef long long count = 0
    try:
        high = _subset_sums(d, h, n)
        with nogil:
            for b in range(nhigh):
                hb = high[b]
                for a in range(nlow):
                    if fabs(low[a] + hb) >= threshold:
                        count += 1
    finally:
        free(low)
        if high != NULL:
            free(high)
    return count


def monte_carlo_count(const double[:] d, u64 seed, long long start, long long iterations, double threshold):
    """Count seeded sign-flip draws ``start .. start+iterations-1`` with
    ``|sum| >= threshold``."""
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t wpi = (n + 63) // 64
    cdef long long t, count = 0
    cdef Py_ssize_t i, w
    cdef u64 word = 0
    cdef u64 base
    cdef double s
    with nogil:
        for t in range(start, start + iterations):
            base = <u64>t * <u64>wpi
            s = 0.0
            for i in range(n):
                if i % 64 == 0:
                    word = _splitmix64(seed, base + <u64>(i // 64))
                if (word >> (i % 64)) & 1:
                    s = s - d[i]
                else:
                    s = s + d[i]
            if fabs(s) >= threshold:
                count += 1
    return count
