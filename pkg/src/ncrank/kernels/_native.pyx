# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the pure kernels in `ncrank.kernels.pyref`.

Same algorithms, same arithmetic, same order of float operations (the
extension is built with FP contraction disabled), so results are
bit-identical to the reference implementations. See pyref.py for the
kernel contracts.
"""

import numpy as np

from libc.math cimport sqrt
from libc.stdint cimport int64_t, uint64_t

BACKEND_NAME = "native"
ATTEMPTS = 64

cdef uint64_t C_ATTEMPTS = 64
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def scatter_add_rows(double[:, ::1] out, int64_t[::1] rows, double[:, :] contrib):
    """out[rows[b]] += contrib[b], accumulated in batch order."""
    cdef Py_ssize_t b, d, r
    cdef Py_ssize_t nb = rows.shape[0]
    cdef Py_ssize_t nd = out.shape[1]
    with nogil:
        for b in range(nb):
            r = rows[b]
            for d in range(nd):
                out[r, d] += contrib[b, d]


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
                double step, double beta1, double beta2, double eps, double bc2):
    """One fused Adam update, in place; see pyref.adam_update."""
    cdef Py_ssize_t i
    cdef Py_ssize_t n = param.shape[0]
    cdef double omb1 = 1.0 - beta1
    cdef double omb2 = 1.0 - beta2
    cdef double g
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + omb1 * g
            v[i] = beta2 * v[i] + omb2 * (g * g)
            param[i] -= (step * m[i]) / (sqrt(v[i] / bc2) + eps)


cdef inline bint _row_contains(int64_t[::1] items, int64_t lo, int64_t hi, int64_t j) nogil:
    cdef int64_t mid
    cdef int64_t end = hi
    while lo < hi:
        mid = (lo + hi) >> 1
        if items[mid] < j:
            lo = mid + 1
        else:
            hi = mid
    return lo < end and items[lo] == j


def sample_negatives(key, start, int64_t[::1] users, int64_t[::1] offsets,
                     int64_t[::1] items, int64_t n_items):
    """Draw one non-interacted item per slot; see pyref.sample_negatives."""
    cdef uint64_t ckey = <uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t cstart = <uint64_t>(int(start) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t nslots = users.shape[0]
    out_arr = np.empty(nslots, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t s
    cdef int a
    cdef int64_t u, lo, hi, j, t
    cdef uint64_t val, base, k
    cdef double uf
    cdef bint found
    with nogil:
        for s in range(nslots):
            u = users[s]
            lo = offsets[u]
            hi = offsets[u + 1]
            base = cstart + 1 + (<uint64_t>s) * C_ATTEMPTS
            found = False
            for a in range(63):
                val = mix64(ckey + (base + <uint64_t>a) * GOLDEN)
                uf = <double>(val >> 11) * INV_2_53
                j = <int64_t>(uf * n_items)
                if j > n_items - 1:
                    j = n_items - 1
                if not _row_contains(items, lo, hi, j):
                    out[s] = j
                    found = True
                    break
            if not found:
                val = mix64(ckey + (base + C_ATTEMPTS - 1) * GOLDEN)
                k = val % <uint64_t>(n_items - (hi - lo))
                j = <int64_t>k
                for t in range(lo, hi):
                    if items[t] <= j:
                        j += 1
                    else:
                        break
                out[s] = j
    return out_arr
