# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled normalisation-sweep kernels.

Same contract as _kernels_py (that module is the documentation and the
ground truth). Loops are written j-innermost over C-contiguous rows so
the compiler can vectorise them, including the exp calls, which dominate
the cost. Running maxima start from the first element rather than -inf
because the extension is built with finite-math flags.
"""

from libc.math cimport exp, log

import numpy as np

BACKEND_NAME = "compiled"


def sinkhorn_log(a, int n_s):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] av = a
    cdef Py_ssize_t n = av.shape[0]
    r_hist_arr = np.zeros((n_s + 1, n))
    c_hist_arr = np.zeros((n_s + 1, n))
    log_s_arr = np.empty((n, n))
    cdef double[:, ::1] r_hist = r_hist_arr
    cdef double[:, ::1] c_hist = c_hist_arr
    cdef double[:, ::1] log_s = log_s_arr
    cdef double[::1] r = np.zeros(n)
    cdef double[::1] c = np.empty(n)
    cdef double[::1] cm = np.empty(n)
    cdef double[::1] cs = np.empty(n)
    cdef Py_ssize_t i, j, t
    cdef double m, s, z

    for t in range(1, n_s + 1):
        # column step: c[j] = lse_i(a[i, j] - r[i])
        for j in range(n):
            cm[j] = av[0, j] - r[0]
        for i in range(1, n):
            for j in range(n):
                z = av[i, j] - r[i]
                if z > cm[j]:
                    cm[j] = z
        for j in range(n):
            cs[j] = 0.0
        for i in range(n):
            for j in range(n):
                cs[j] += exp(av[i, j] - r[i] - cm[j])
        for j in range(n):
            c[j] = cm[j] + log(cs[j])
            c_hist[t, j] = c[j]
        # row step: r[i] = lse_j(a[i, j] - c[j])
        for i in range(n):
            m = av[i, 0] - c[0]
            for j in range(1, n):
                z = av[i, j] - c[j]
                if z > m:
                    m = z
            s = 0.0
            for j in range(n):
                s += exp(av[i, j] - c[j] - m)
            r[i] = m + log(s)
            r_hist[t, i] = r[i]
    for i in range(n):
        for j in range(n):
            log_s[i, j] = av[i, j] - r[i] - c[j]
    return log_s_arr, r_hist_arr, c_hist_arr


def sinkhorn_log_grad(a, r_hist, c_hist, grad_log_s):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] av = a
    cdef double[:, ::1] rh = np.ascontiguousarray(r_hist, dtype=np.float64)
    cdef double[:, ::1] ch = np.ascontiguousarray(c_hist, dtype=np.float64)
    cdef double[:, ::1] gs = np.ascontiguousarray(grad_log_s, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]
    cdef int n_s = rh.shape[0] - 1
    g_arr = np.empty((n, n))
    cdef double[:, ::1] g = g_arr
    cdef double[::1] acc = np.empty(n)
    cdef Py_ssize_t i, j, t
    cdef double s

    for i in range(n):
        for j in range(n):
            g[i, j] = gs[i, j]
    for t in range(n_s, 0, -1):
        # through the row step: g -= rowsum(g) * exp(a - r_hist[t] - c_hist[t])
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += g[i, j]
            for j in range(n):
                g[i, j] -= s * exp(av[i, j] - rh[t, i] - ch[t, j])
        # through the column step: g -= colsum(g) * exp(a - r_hist[t-1] - c_hist[t])
        for j in range(n):
            acc[j] = 0.0
        for i in range(n):
            for j in range(n):
                acc[j] += g[i, j]
        for i in range(n):
            for j in range(n):
                g[i, j] -= acc[j] * exp(av[i, j] - rh[t - 1, i] - ch[t, j])
    return g_arr
