# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; semantics match ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def footprint_sum(values, offsets):
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const long long[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n_rows = v.shape[0], n_cols = v.shape[1], k, r, c, dr, dc
    cdef Py_ssize_t r0, r1, c0, c1
    out_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    # offset-major loop keeps the accumulation order identical to the numpy version
    for k in range(off.shape[0]):
        dr = off[k, 0]
        dc = off[k, 1]
        r0 = max(0, -dr)
        r1 = min(n_rows, n_rows - dr)
        c0 = max(0, -dc)
        c1 = min(n_cols, n_cols - dc)
        for r in range(r0, r1):
            for c in range(c0, c1):
                out[r, c] += v[r + dr, c + dc]
    return out_arr


def neighbor_product(p, offsets, weights):
    cdef const double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const long long[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n_rows = pv.shape[0], n_cols = pv.shape[1], k, r, c, dr, dc
    cdef Py_ssize_t r0, r1, c0, c1
    cdef double wk
    out_arr = np.ones((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for k in range(off.shape[0]):
        dr = off[k, 0]
        dc = off[k, 1]
        wk = w[k]
        r0 = max(0, -dr)
        r1 = min(n_rows, n_rows - dr)
        c0 = max(0, -dc)
        c1 = min(n_cols, n_cols - dc)
        for r in range(r0, r1):
            for c in range(c0, c1):
                out[r, c] *= 1.0 - pv[r + dr, c + dc] * wk
    return out_arr


cdef inline double _overlap(const double[::1] sig, Py_ssize_t r, Py_ssize_t c,
                            const long long[::1] ov_indptr, const long long[:, ::1] ov_off,
                            Py_ssize_t k, Py_ssize_t width, Py_ssize_t height) nogil:
    cdef double total = 0.0
    cdef Py_ssize_t j, ur, uc
    for j in range(ov_indptr[k], ov_indptr[k + 1]):
        ur = r + ov_off[j, 0]
        uc = c + ov_off[j, 1]
        if 0 <= ur < height and 0 <= uc < width:
            total += sig[ur * width + uc]
    return total


def chain_dp_backward(node, sigma, terminal, reach_off, fov_off, ov_indptr, ov_off,
                      Py_ssize_t width, Py_ssize_t height, bint pairwise=True):
    cdef const double[:, ::1] nd = np.ascontiguousarray(node, dtype=np.float64)
    cdef const double[:, ::1] sg = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef const double[::1] term = np.ascontiguousarray(terminal, dtype=np.float64)
    cdef const long long[:, ::1] reach = np.ascontiguousarray(reach_off, dtype=np.int64)
    cdef const long long[::1] optr = np.ascontiguousarray(ov_indptr, dtype=np.int64)
    cdef const long long[:, ::1] ooff = np.ascontiguousarray(ov_off, dtype=np.int64)
    cdef Py_ssize_t H = nd.shape[0], n = nd.shape[1], s, a, k, r, c, br, bc, b
    cdef Py_ssize_t n_reach = reach.shape[0]
    cdef double best, val
    W_arr = np.empty((H, n), dtype=np.float64)
    cdef double[:, ::1] W = W_arr
    for a in range(n):
        W[H - 1, a] = nd[H - 1, a] - term[a]
    with nogil:
        for s in range(H - 2, -1, -1):
            for a in range(n):
                r = a // width
                c = a - r * width
                best = -1e308
                for k in range(n_reach):
                    br = r + reach[k, 0]
                    bc = c + reach[k, 1]
                    if br < 0 or br >= height or bc < 0 or bc >= width:
                        continue
                    b = br * width + bc
                    val = W[s + 1, b]
                    if pairwise:
                        val = val - _overlap(sg[s + 1], r, c, optr, ooff, k, width, height)
                    if val > best:
                        best = val
                W[s, a] = nd[s, a] + best
    return W_arr


def pair_penalties(sigma_row, Py_ssize_t a, reach_off, fov_off, ov_indptr, ov_off,
                   Py_ssize_t width, Py_ssize_t height):
    cdef const double[::1] sg = np.ascontiguousarray(sigma_row, dtype=np.float64)
    cdef const long long[:, ::1] reach = np.ascontiguousarray(reach_off, dtype=np.int64)
    cdef const long long[::1] optr = np.ascontiguousarray(ov_indptr, dtype=np.int64)
    cdef const long long[:, ::1] ooff = np.ascontiguousarray(ov_off, dtype=np.int64)
    cdef Py_ssize_t r = a // width, c = a - (a // width) * width, k, br, bc
    out_arr = np.full(reach.shape[0], np.nan)
    cdef double[::1] out = out_arr
    for k in range(reach.shape[0]):
        br = r + reach[k, 0]
        bc = c + reach[k, 1]
        if 0 <= br < height and 0 <= bc < width:
            out[k] = _overlap(sg, r, c, optr, ooff, k, width, height)
    return out_arr
