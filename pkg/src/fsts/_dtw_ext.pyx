# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DTW kernels.  Inputs are validated by ``fsts.dtw``."""

import numpy as np

from libc.math cimport fabs, INFINITY
from libc.stdlib cimport malloc, free


cdef double _dtw(const double* a, Py_ssize_t n, const double* b, Py_ssize_t m,
                 Py_ssize_t w, double* prev, double* cur) noexcept nogil:
    # rows run over the longer series so the buffers hold min(n, m) + 1 cells
    cdef const double* t
    cdef Py_ssize_t i, j, lo, hi
    cdef double best, c
    cdef double* tmp
    if m > n:
        t = a; a = b; b = t
        i = n; n = m; m = i
    if w < 0:
        w = n
    for j in range(m + 1):
        prev[j] = INFINITY
        cur[j] = INFINITY
    prev[0] = 0.0
    for i in range(1, n + 1):
        lo = i - w
        if lo < 1:
            lo = 1
        hi = i + w
        if hi > m:
            hi = m
        cur[lo - 1] = INFINITY
        for j in range(lo, hi + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            c = fabs(a[i - 1] - b[j - 1])
            cur[j] = c + best
        tmp = prev; prev = cur; cur = tmp
    return prev[m]


def dtw_distance(const double[::1] a, const double[::1] b, Py_ssize_t window=-1):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t k = (n if n < m else m) + 1
    cdef double* buf = <double*> malloc(2 * k * sizeof(double))
    cdef double out
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            out = _dtw(&a[0], n, &b[0], m, window, buf, buf + k)
    finally:
        free(buf)
    return out


def dtw_matrix(const double[:, ::1] queries, const long[::1] qlen,
               const double[:, ::1] supports, const long[::1] slen,
               Py_ssize_t window=-1):
    cdef Py_ssize_t nq = queries.shape[0], ns = supports.shape[0]
    cdef Py_ssize_t k = max(queries.shape[1], supports.shape[1]) + 1
    cdef Py_ssize_t i, j
    out_arr = np.empty((nq, ns), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double* buf = <double*> malloc(2 * k * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(nq):
                for j in range(ns):
                    out[i, j] = _dtw(&queries[i, 0], qlen[i], &supports[j, 0], slen[j],
                                     window, buf, buf + k)
    finally:
        free(buf)
    return out_arr
