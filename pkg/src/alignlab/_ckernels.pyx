# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled loss kernels (hot inner loops of training and probing).

Same contracts as alignlab._kernels_numpy; see that module for the
padded-row layout convention.
"""

import numpy as np

from libc.math cimport erf, exp, log, sqrt, M_PI


def softmax_ce_rows(double[:, ::1] sims, long[::1] counts, double inv_beta):
    cdef Py_ssize_t n = sims.shape[0]
    cdef Py_ssize_t m = sims.shape[1]
    losses_arr = np.zeros(n, dtype=np.float64)
    dsims_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] dsims = dsims_arr
    cdef Py_ssize_t k, j, c
    cdef double zmax, s, z
    for k in range(n):
        c = counts[k]
        zmax = sims[k, 0] * inv_beta
        for j in range(1, c):
            z = sims[k, j] * inv_beta
            if z > zmax:
                zmax = z
        s = 0.0
        for j in range(c):
            dsims[k, j] = exp(sims[k, j] * inv_beta - zmax)
            s += dsims[k, j]
        losses[k] = zmax + log(s) - sims[k, 0] * inv_beta
        for j in range(c):
            dsims[k, j] = dsims[k, j] / s * inv_beta
        dsims[k, 0] -= inv_beta
    return losses_arr, dsims_arr


def hinge_positive_rows(double[:, ::1] sims, long[::1] counts, double tau):
    cdef Py_ssize_t n = sims.shape[0]
    cdef Py_ssize_t m = sims.shape[1]
    losses_arr = np.zeros(n, dtype=np.float64)
    dsims_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] dsims = dsims_arr
    cdef Py_ssize_t k, j, c
    cdef double margin, acc, n_neg, n_active
    for k in range(n):
        c = counts[k]
        n_neg = c - 1
        acc = 0.0
        n_active = 0.0
        for j in range(1, c):
            margin = tau - sims[k, 0] + sims[k, j]
            if margin > 0.0:
                acc += margin
                n_active += 1.0
                dsims[k, j] = 1.0 / n_neg
        losses[k] = acc / n_neg
        dsims[k, 0] = -n_active / n_neg
    return losses_arr, dsims_arr


def hinge_pair_rows(double[:, ::1] syn, long[::1] syn_counts,
                    double[:, ::1] std, long[::1] std_counts, double tau):
    cdef Py_ssize_t n = syn.shape[0]
    cdef Py_ssize_t ms = syn.shape[1]
    cdef Py_ssize_t mt = std.shape[1]
    losses_arr = np.zeros(n, dtype=np.float64)
    dsyn_arr = np.zeros((n, ms), dtype=np.float64)
    dstd_arr = np.zeros((n, mt), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] dsyn = dsyn_arr
    cdef double[:, ::1] dstd = dstd_arr
    cdef Py_ssize_t k, i, j, cs, ct
    cdef double margin, acc, n_pairs
    for k in range(n):
        cs = syn_counts[k]
        ct = std_counts[k]
        n_pairs = cs * ct
        acc = 0.0
        for i in range(cs):
            for j in range(ct):
                margin = tau - syn[k, i] + std[k, j]
                if margin > 0.0:
                    acc += margin
                    dsyn[k, i] -= 1.0 / n_pairs
                    dstd[k, j] += 1.0 / n_pairs
        losses[k] = acc / n_pairs
    return losses_arr, dsyn_arr, dstd_arr


def gelu(x):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.empty_like(x_arr)
    cdef double[::1] xv = x_arr.ravel()
    cdef double[::1] ov = out_arr.ravel()
    cdef Py_ssize_t i, size = xv.shape[0]
    cdef double inv_sqrt2 = 1.0 / sqrt(2.0)
    for i in range(size):
        ov[i] = 0.5 * xv[i] * (1.0 + erf(xv[i] * inv_sqrt2))
    return out_arr


def gelu_grad(x):
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.empty_like(x_arr)
    cdef double[::1] xv = x_arr.ravel()
    cdef double[::1] ov = out_arr.ravel()
    cdef Py_ssize_t i, size = xv.shape[0]
    cdef double inv_sqrt2 = 1.0 / sqrt(2.0)
    cdef double inv_sqrt2pi = 1.0 / sqrt(2.0 * M_PI)
    cdef double cdf, pdf
    for i in range(size):
        cdf = 0.5 * (1.0 + erf(xv[i] * inv_sqrt2))
        pdf = exp(-0.5 * xv[i] * xv[i]) * inv_sqrt2pi
        ov[i] = cdf + xv[i] * pdf
    return out_arr


def softmax_xent_rows(double[:, ::1] logits, long[::1] labels):
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t c = logits.shape[1]
    losses_arr = np.zeros(n, dtype=np.float64)
    dlogits_arr = np.zeros((n, c), dtype=np.float64)
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] dlogits = dlogits_arr
    cdef Py_ssize_t k, j
    cdef double zmax, s, lse
    for k in range(n):
        zmax = logits[k, 0]
        for j in range(1, c):
            if logits[k, j] > zmax:
                zmax = logits[k, j]
        s = 0.0
        for j in range(c):
            s += exp(logits[k, j] - zmax)
        lse = zmax + log(s)
        losses[k] = lse - logits[k, labels[k]]
        for j in range(c):
            dlogits[k, j] = exp(logits[k, j] - zmax) / s
        dlogits[k, labels[k]] -= 1.0
    return losses_arr, dlogits_arr
