# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmax, NAN

cnp.import_array()


cdef inline cnp.ndarray[cnp.float64_t, ndim=1] _f64(values):
    return np.ascontiguousarray(values, dtype=np.float64)


cdef void _ranks_into(const double[::1] x, double[::1] out, const cnp.intp_t[::1] order) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i = 0, j, t
    cdef double avg
    while i < n:
        j = i + 1
        while j < n and x[order[j]] == x[order[i]]:
            j += 1
        avg = (i + j + 1) / 2.0
        for t in range(i, j):
            out[order[t]] = avg
        i = j


cdef cnp.ndarray[cnp.float64_t, ndim=1] _ranks(const double[::1] x):
    cdef cnp.ndarray[cnp.intp_t, ndim=1] order = np.argsort(np.asarray(x), kind="stable")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(x.shape[0], dtype=np.float64)
    _ranks_into(x, out, order)
    return out


cdef double _pearson(const double[::1] x, const double[::1] y) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double x0, y0, sx = 0.0, sy = 0.0, mx, my
    cdef double dx, dy, sxy = 0.0, sxx = 0.0, syy = 0.0, r, ax = 0.0, ay = 0.0
    cdef bint x_const = True, y_const = True
    if n < 2:
        return NAN
    x0 = x[0]
    y0 = y[0]
    for i in range(n):
        if x[i] != x0:
            x_const = False
        if y[i] != y0:
            y_const = False
        sx += x[i]
        sy += y[i]
    if x_const or y_const:
        return NAN
    mx = sx / n
    my = sy / n
    # scale deviations to [-1, 1] so tiny or huge inputs neither underflow nor overflow
    for i in range(n):
        ax = fmax(ax, fabs(x[i] - mx))
        ay = fmax(ay, fabs(y[i] - my))
    if ax == 0.0 or ay == 0.0:
        return NAN
    for i in range(n):
        dx = (x[i] - mx) / ax
        dy = (y[i] - my) / ay
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    r = sxy / sqrt(sxx * syy)
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


cdef double _corr(const double[::1] x, const double[::1] y, int kind):
    if kind == 1:
        return _pearson(_ranks(x), _ranks(y))
    return _pearson(x, y)


def rankdata(x):
    return _ranks(_f64(x))


def pearson(x, y):
    return _pearson(_f64(x), _f64(y))


def spearman(x, y):
    return _pearson(_ranks(_f64(x)), _ranks(_f64(y)))


def group_correlations(auto, human, offsets, int kind):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = _f64(auto)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h = _f64(human)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] off = np.ascontiguousarray(offsets, dtype=np.intp)
    cdef Py_ssize_t g, n = off.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    for g in range(n):
        out[g] = _corr(a[off[g]:off[g + 1]], h[off[g]:off[g + 1]], kind)
    return out


def resampled_dataset_correlation(auto, human, offsets, groups, int kind):
    cdef const double[::1] a = _f64(auto)
    cdef const double[::1] h = _f64(human)
    cdef const cnp.intp_t[::1] off = np.ascontiguousarray(offsets, dtype=np.intp)
    cdef const cnp.intp_t[::1] sel = np.ascontiguousarray(groups, dtype=np.intp)
    cdef Py_ssize_t k, i, g, total = 0, pos = 0
    for k in range(sel.shape[0]):
        g = sel[k]
        total += off[g + 1] - off[g]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.empty(total, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xh = np.empty(total, dtype=np.float64)
    cdef double[::1] va = xa
    cdef double[::1] vh = xh
    for k in range(sel.shape[0]):
        g = sel[k]
        for i in range(off[g], off[g + 1]):
            va[pos] = a[i]
            vh[pos] = h[i]
            pos += 1
    return _corr(xa, xh, kind)


def lcs_length(a, b):
    cdef const cnp.int64_t[::1] x = np.ascontiguousarray(a, dtype=np.int64)
    cdef const cnp.int64_t[::1] y = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], i, j
    if n == 0 or m == 0:
        return 0
    cdef cnp.int64_t[::1] prev = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] cur = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] tmp
    with nogil:
        for i in range(n):
            cur[0] = 0
            for j in range(1, m + 1):
                if x[i] == y[j - 1]:
                    cur[j] = prev[j - 1] + 1
                elif prev[j] >= cur[j - 1]:
                    cur[j] = prev[j]
                else:
                    cur[j] = cur[j - 1]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])
