# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled string kernels; mirrors kgqa._kernels_py exactly."""

from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


cdef Py_ssize_t _lev(str a, str b) except -1:
    cdef Py_ssize_t n, m, i, j, sub, ins, dele, best
    cdef Py_ssize_t *prev
    cdef Py_ssize_t *cur
    cdef Py_ssize_t *tmp
    cdef Py_UCS4 ca
    if len(a) < len(b):
        a, b = b, a
    n = len(a)
    m = len(b)
    if m == 0:
        return n
    prev = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    cur = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    try:
        for j in range(m + 1):
            prev[j] = j
        for i in range(1, n + 1):
            ca = a[i - 1]
            cur[0] = i
            for j in range(1, m + 1):
                sub = prev[j - 1] + (0 if ca == b[j - 1] else 1)
                ins = cur[j - 1] + 1
                dele = prev[j] + 1
                best = sub
                if ins < best:
                    best = ins
                if dele < best:
                    best = dele
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(prev)
        free(cur)


def levenshtein(str a, str b):
    return _lev(a, b)


cdef double _sim(str a, str b) except -1.0:
    cdef Py_ssize_t longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - (<double> _lev(a, b)) / longest


def similarity(str a, str b):
    return _sim(a, b)


def similarity_many(str query, choices):
    return [_sim(query, c) for c in choices]


cdef uint64_t _fnv(bytes data):
    cdef uint64_t h = FNV_OFFSET
    cdef const unsigned char[:] view = data
    cdef Py_ssize_t i
    for i in range(view.shape[0]):
        h ^= view[i]
        h *= FNV_PRIME
    return h


def fnv1a_64(bytes data):
    return _fnv(data)


def trigram_counts(str text, Py_ssize_t dim):
    cdef list counts = [0] * dim
    cdef Py_ssize_t i, n = len(text)
    cdef Py_ssize_t bucket
    if n == 0:
        return counts
    if n < 3:
        bucket = <Py_ssize_t> (_fnv(text.encode("utf-8")) % <uint64_t> dim)
        counts[bucket] += 1
        return counts
    for i in range(n - 2):
        bucket = <Py_ssize_t> (_fnv(text[i:i + 3].encode("utf-8")) % <uint64_t> dim)
        counts[bucket] += 1
    return counts
