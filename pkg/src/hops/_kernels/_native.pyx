# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Reference semantics live in _pylib.py; the two
backends agree up to floating-point reduction order."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, fabs, isfinite, log

from ..errors import NonFiniteScaling

cnp.import_array()


def sinkhorn_log_loop(const double[:, ::1] log_kernel,
                      const double[::1] r,
                      const double[::1] c,
                      int max_iter,
                      double tol):
    cdef Py_ssize_t nb = log_kernel.shape[0]
    cdef Py_ssize_t nc = log_kernel.shape[1]
    la_arr = np.zeros(nb, dtype=np.float64)
    lb_arr = np.empty(nc, dtype=np.float64)
    lr_arr = np.empty(nb, dtype=np.float64)
    lc_arr = np.empty(nc, dtype=np.float64)
    rowsum_arr = np.empty(nb, dtype=np.float64)
    colsum_arr = np.empty(nc, dtype=np.float64)
    cdef double[::1] la = la_arr
    cdef double[::1] lb = lb_arr
    cdef double[::1] lr = lr_arr
    cdef double[::1] lc = lc_arr
    cdef double[::1] rowsum = rowsum_arr
    cdef double[::1] colsum = colsum_arr
    cdef Py_ssize_t i, j
    cdef int it = 0
    cdef double m, s, v, res_r, res_c

    for i in range(nb):
        lr[i] = log(r[i]) if r[i] > 0.0 else -INFINITY
    for j in range(nc):
        lc[j] = log(c[j]) if c[j] > 0.0 else -INFINITY
        lb[j] = 0.0 if c[j] > 0.0 else -INFINITY

    res_r = INFINITY
    res_c = INFINITY
    while it < max_iter:
        it += 1
        # alpha <- r / (K beta)
        for i in range(nb):
            m = -INFINITY
            for j in range(nc):
                v = log_kernel[i, j] + lb[j]
                if v > m:
                    m = v
            if m == -INFINITY:
                la[i] = INFINITY  # empty row: caller precondition violated
                continue
            s = 0.0
            for j in range(nc):
                v = log_kernel[i, j] + lb[j]
                if v != -INFINITY:
                    s += exp(v - m)
            la[i] = lr[i] - (m + log(s))
        # beta <- c / (K^T alpha), with 0/0 -> 0 off support
        for j in range(nc):
            if c[j] <= 0.0:
                lb[j] = -INFINITY
                continue
            m = -INFINITY
            for i in range(nb):
                v = log_kernel[i, j] + la[i]
                if v > m:
                    m = v
            if m == -INFINITY:
                lb[j] = -INFINITY
                continue
            s = 0.0
            for i in range(nb):
                v = log_kernel[i, j] + la[i]
                if v != -INFINITY:
                    s += exp(v - m)
            lb[j] = lc[j] - (m + log(s))
        # marginal residuals of the reconstructed plan
        for j in range(nc):
            colsum[j] = 0.0
        res_r = 0.0
        for i in range(nb):
            s = 0.0
            for j in range(nc):
                v = la[i] + log_kernel[i, j] + lb[j]
                if v != -INFINITY:
                    v = exp(v)
                    s += v
                    colsum[j] += v
            res_r += fabs(s - r[i])
        res_c = 0.0
        for j in range(nc):
            res_c += fabs(colsum[j] - c[j])
        if res_r <= tol and res_c <= tol:
            break
    return la_arr, lb_arr, it, res_r, res_c


def sinkhorn_linear_loop(const double[:, ::1] kernel,
                         const double[::1] r,
                         const double[::1] c,
                         int max_iter,
                         double tol):
    cdef Py_ssize_t nb = kernel.shape[0]
    cdef Py_ssize_t nc = kernel.shape[1]
    alpha_arr = np.ones(nb, dtype=np.float64)
    beta_arr = np.empty(nc, dtype=np.float64)
    colsum_arr = np.empty(nc, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] colsum = colsum_arr
    cdef Py_ssize_t i, j
    cdef int it = 0
    cdef double s, v, res_r, res_c
    cdef bint ok

    for j in range(nc):
        beta[j] = 1.0 if c[j] > 0.0 else 0.0

    res_r = INFINITY
    res_c = INFINITY
    while it < max_iter:
        it += 1
        ok = True
        for i in range(nb):
            s = 0.0
            for j in range(nc):
                s += kernel[i, j] * beta[j]
            alpha[i] = r[i] / s
            if not isfinite(alpha[i]):
                ok = False
        for j in range(nc):
            if c[j] <= 0.0:
                beta[j] = 0.0
                continue
            s = 0.0
            for i in range(nb):
                s += kernel[i, j] * alpha[i]
            beta[j] = c[j] / s
            if not isfinite(beta[j]):
                ok = False
        if not ok:
            raise NonFiniteScaling(f"non-finite scaling at iteration {it}")
        for j in range(nc):
            colsum[j] = 0.0
        res_r = 0.0
        for i in range(nb):
            s = 0.0
            for j in range(nc):
                v = alpha[i] * kernel[i, j] * beta[j]
                s += v
                colsum[j] += v
            res_r += fabs(s - r[i])
        res_c = 0.0
        for j in range(nc):
            res_c += fabs(colsum[j] - c[j])
        if res_r <= tol and res_c <= tol:
            break
    return alpha_arr, beta_arr, it, res_r, res_c


def hard_counts(const cnp.uint8_t[:, ::1] cand_rows,
                const cnp.int64_t[::1] batch_idx,
                const cnp.int64_t[:, ::1] neighbors):
    cdef Py_ssize_t nb = batch_idx.shape[0]
    cdef Py_ssize_t nc = cand_rows.shape[1]
    cdef Py_ssize_t k = neighbors.shape[1]
    out_arr = np.zeros((nb, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, t, cl
    cdef cnp.int64_t i, j
    for b in range(nb):
        i = batch_idx[b]
        for cl in range(nc):
            out[b, cl] = cand_rows[i, cl]
        for t in range(k):
            j = neighbors[i, t]
            for cl in range(nc):
                out[b, cl] += cand_rows[j, cl]
    return out_arr


def soft_counts(const cnp.uint8_t[:, ::1] cand_rows,
                const cnp.int64_t[::1] batch_idx,
                const cnp.int64_t[:, ::1] neighbors,
                const double[:, ::1] weights):
    cdef Py_ssize_t nb = batch_idx.shape[0]
    cdef Py_ssize_t nc = cand_rows.shape[1]
    cdef Py_ssize_t k = neighbors.shape[1]
    out_arr = np.zeros((nb, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, t, cl
    cdef cnp.int64_t i, j
    cdef double w
    for b in range(nb):
        i = batch_idx[b]
        for cl in range(nc):
            out[b, cl] = cand_rows[i, cl]
        for t in range(k):
            j = neighbors[i, t]
            w = weights[b, t]
            for cl in range(nc):
                out[b, cl] += w * cand_rows[j, cl]
    return out_arr


def fnv1a64(const unsigned char[::1] data):
    cdef unsigned long long h = 0xCBF29CE484222325ULL
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h ^= data[i]
        h *= 0x100000001B3ULL
    return h
