# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled message-passing kernels; see ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def scatter_add_rows(const double[:, ::1] values, const cnp.int64_t[::1] index, Py_ssize_t n):
    cdef Py_ssize_t E = values.shape[0], C = values.shape[1], e, c, row
    out_arr = np.zeros((n, C))
    cdef double[:, ::1] out = out_arr
    for e in range(E):
        row = index[e]
        for c in range(C):
            out[row, c] += values[e, c]
    return out_arr


def segment_softmax(const double[:, ::1] scores, const cnp.int64_t[::1] index, Py_ssize_t n):
    cdef Py_ssize_t E = scores.shape[0], H = scores.shape[1], e, h, row
    peak_arr = np.full((n, H), -INFINITY)
    denom_arr = np.zeros((n, H))
    alpha_arr = np.empty((E, H))
    cdef double[:, ::1] peak = peak_arr
    cdef double[:, ::1] denom = denom_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef double v
    for e in range(E):
        row = index[e]
        for h in range(H):
            if scores[e, h] > peak[row, h]:
                peak[row, h] = scores[e, h]
    for e in range(E):
        row = index[e]
        for h in range(H):
            v = exp(scores[e, h] - peak[row, h])
            alpha[e, h] = v
            denom[row, h] += v
    for e in range(E):
        row = index[e]
        for h in range(H):
            alpha[e, h] /= denom[row, h]
    return alpha_arr


def segment_softmax_backward(const double[:, ::1] alpha, const double[:, ::1] grad_alpha,
                             const cnp.int64_t[::1] index, Py_ssize_t n):
    cdef Py_ssize_t E = alpha.shape[0], H = alpha.shape[1], e, h, row
    total_arr = np.zeros((n, H))
    out_arr = np.empty((E, H))
    cdef double[:, ::1] total = total_arr
    cdef double[:, ::1] out = out_arr
    for e in range(E):
        row = index[e]
        for h in range(H):
            out[e, h] = alpha[e, h] * grad_alpha[e, h]
            total[row, h] += out[e, h]
    for e in range(E):
        row = index[e]
        for h in range(H):
            out[e, h] -= alpha[e, h] * total[row, h]
    return out_arr


def attend(const double[:, ::1] alpha, const double[:, ::1] z, const cnp.int64_t[::1] src,
           const cnp.int64_t[::1] dst, Py_ssize_t n):
    cdef Py_ssize_t E = alpha.shape[0], K = alpha.shape[1], F = z.shape[1] // K
    cdef Py_ssize_t e, k, f, s, d, off
    cdef double a
    out_arr = np.zeros((n, K * F))
    cdef double[:, ::1] out = out_arr
    for e in range(E):
        s = src[e]
        d = dst[e]
        for k in range(K):
            a = alpha[e, k]
            off = k * F
            for f in range(off, off + F):
                out[d, f] += a * z[s, f]
    return out_arr


def attend_backward(const double[:, ::1] grad_out, const double[:, ::1] alpha, const double[:, ::1] z,
                    const cnp.int64_t[::1] src, const cnp.int64_t[::1] dst):
    cdef Py_ssize_t E = alpha.shape[0], K = alpha.shape[1], F = z.shape[1] // K
    cdef Py_ssize_t e, k, f, s, d, off
    cdef double a, acc
    grad_alpha_arr = np.empty((E, K))
    grad_z_arr = np.zeros((z.shape[0], z.shape[1]))
    cdef double[:, ::1] grad_alpha = grad_alpha_arr
    cdef double[:, ::1] grad_z = grad_z_arr
    for e in range(E):
        s = src[e]
        d = dst[e]
        for k in range(K):
            a = alpha[e, k]
            off = k * F
            acc = 0.0
            for f in range(off, off + F):
                acc += grad_out[d, f] * z[s, f]
                grad_z[s, f] += a * grad_out[d, f]
            grad_alpha[e, k] = acc
    return grad_alpha_arr, grad_z_arr
