# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: direct convolution and windowed patch correlation.

Semantics match mvenhance.backend.fallback exactly (up to float rounding);
the cross-backend equivalence tests pin that down.
"""

import numpy as np

from libc.math cimport sqrt

NAME = "compiled"

ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * pad - kw) // stride + 1

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    xp_arr = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad), dtype=dtype)
    xp_arr[:, :, pad:pad + h, pad:pad + wd] = np.asarray(x)
    y_arr = np.zeros((n, co, ho, wo), dtype=dtype)

    cdef real[:, :, :, ::1] xp = xp_arr
    cdef real[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t b, o, i, p, q, r, c, ir
    cdef real wv

    for b in range(n):
        for o in range(co):
            for i in range(ci):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[o, i, p, q]
                        for r in range(ho):
                            ir = r * stride + p
                            if stride == 1:
                                for c in range(wo):
                                    y[b, o, r, c] += wv * xp[b, i, ir, c + q]
                            else:
                                for c in range(wo):
                                    y[b, o, r, c] += wv * xp[b, i, ir, c * stride + q]
    return y_arr


def conv2d_backward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                    real[:, :, :, ::1] dy, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = dy.shape[2], wo = dy.shape[3]

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    xp_arr = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad), dtype=dtype)
    xp_arr[:, :, pad:pad + h, pad:pad + wd] = np.asarray(x)
    dxp_arr = np.zeros_like(xp_arr)
    dw_arr = np.zeros((co, ci, kh, kw), dtype=dtype)

    cdef real[:, :, :, ::1] xp = xp_arr
    cdef real[:, :, :, ::1] dxp = dxp_arr
    cdef real[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t b, o, i, p, q, r, c, ir
    cdef real wv, acc

    for b in range(n):
        for i in range(ci):
            for o in range(co):
                for p in range(kh):
                    for q in range(kw):
                        wv = w[o, i, p, q]
                        for r in range(ho):
                            ir = r * stride + p
                            if stride == 1:
                                for c in range(wo):
                                    dxp[b, i, ir, c + q] += wv * dy[b, o, r, c]
                            else:
                                for c in range(wo):
                                    dxp[b, i, ir, c * stride + q] += wv * dy[b, o, r, c]

    for o in range(co):
        for i in range(ci):
            for p in range(kh):
                for q in range(kw):
                    acc = 0
                    for b in range(n):
                        for r in range(ho):
                            ir = r * stride + p
                            if stride == 1:
                                for c in range(wo):
                                    acc += xp[b, i, ir, c + q] * dy[b, o, r, c]
                            else:
                                for c in range(wo):
                                    acc += xp[b, i, ir, c * stride + q] * dy[b, o, r, c]
                    dw[o, i, p, q] = acc

    if pad:
        dx_arr = np.ascontiguousarray(dxp_arr[:, :, pad:pad + h, pad:pad + wd])
    else:
        dx_arr = dxp_arr
    return dx_arr, dw_arr


def window_scores(double[:, :, ::1] primary, double[:, :, ::1] source, int radius):
    cdef Py_ssize_t rows = primary.shape[0], cols = primary.shape[1], d = primary.shape[2]
    cdef Py_ssize_t side = 2 * radius + 1

    pn_arr = np.empty((rows, cols), dtype=np.float64)
    sn_arr = np.empty((rows, cols), dtype=np.float64)
    scores_arr = np.full((rows, cols, side * side), -2.0)

    cdef double[:, ::1] pn = pn_arr
    cdef double[:, ::1] sn = sn_arr
    cdef double[:, :, ::1] scores = scores_arr
    cdef Py_ssize_t r, c, k, wi, sr, sc
    cdef int dy, dx
    cdef double acc, denom

    for r in range(rows):
        for c in range(cols):
            acc = 0
            for k in range(d):
                acc += primary[r, c, k] * primary[r, c, k]
            pn[r, c] = sqrt(acc)
            acc = 0
            for k in range(d):
                acc += source[r, c, k] * source[r, c, k]
            sn[r, c] = sqrt(acc)

    for r in range(rows):
        for c in range(cols):
            for wi in range(side * side):
                dy = <int>(wi // side) - radius
                dx = <int>(wi % side) - radius
                sr = r + dy
                sc = c + dx
                if sr < 0 or sr >= rows or sc < 0 or sc >= cols:
                    continue
                denom = pn[r, c] * sn[sr, sc]
                if denom == 0:
                    scores[r, c, wi] = 0
                    continue
                acc = 0
                for k in range(d):
                    acc += primary[r, c, k] * source[sr, sc, k]
                scores[r, c, wi] = acc / denom
    return scores_arr
