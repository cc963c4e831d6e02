# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution and pooling kernels.

Drop-in replacement for ``_pykernels``; same signatures, same results up to
floating-point summation order. Loops over (batch, channel) planes run under
``prange`` and honour ``set_num_threads``.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

ctypedef fused real:
    float
    double

cdef int _threads = 1


def set_num_threads(int n):
    global _threads
    _threads = max(1, n)


def get_num_threads():
    return _threads


def im2col(real[:, :, :, ::1] xpad, int kh, int kw, int sh, int sw, int ho, int wo):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n, c * kh * kw, ho * wo), dtype=dtype)
    cdef real[:, :, ::1] cols = out
    cdef Py_ssize_t plane, b, ch, i, j, y, x, row, base
    for plane in prange(n * c, nogil=True, num_threads=_threads, schedule="static"):
        b = plane // c
        ch = plane % c
        for i in range(kh):
            for j in range(kw):
                row = (ch * kh + i) * kw + j
                for y in range(ho):
                    base = y * wo
                    for x in range(wo):
                        cols[b, row, base + x] = xpad[b, ch, y * sh + i, x * sw + j]
    return out


def col2im(real[:, :, ::1] cols, int c, int hp, int wp, int kh, int kw, int sh, int sw,
           int ho, int wo):
    cdef Py_ssize_t n = cols.shape[0]
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((n, c, hp, wp), dtype=dtype)
    cdef real[:, :, :, ::1] img = out
    cdef Py_ssize_t plane, b, ch, i, j, y, x, row, base
    for plane in prange(n * c, nogil=True, num_threads=_threads, schedule="static"):
        b = plane // c
        ch = plane % c
        for i in range(kh):
            for j in range(kw):
                row = (ch * kh + i) * kw + j
                for y in range(ho):
                    base = y * wo
                    for x in range(wo):
                        img[b, ch, y * sh + i, x * sw + j] += cols[b, row, base + x]
    return out


def depthwise_forward(real[:, :, :, ::1] xpad, real[:, :, ::1] w, int sh, int sw, int ho, int wo):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    dtype = np.float32 if real is float else np.float64
    res = np.zeros((n, c, ho, wo), dtype=dtype)
    cdef real[:, :, :, ::1] out = res
    cdef Py_ssize_t plane, b, ch, i, j, y, x
    cdef real wv
    # one multiply-add pass per kernel tap over a contiguous output row
    for plane in prange(n * c, nogil=True, num_threads=_threads, schedule="static"):
        b = plane // c
        ch = plane % c
        for i in range(kh):
            for j in range(kw):
                wv = w[ch, i, j]
                for y in range(ho):
                    if sw == 1:
                        for x in range(wo):
                            out[b, ch, y, x] += wv * xpad[b, ch, y * sh + i, x + j]
                    else:
                        for x in range(wo):
                            out[b, ch, y, x] += wv * xpad[b, ch, y * sh + i, x * sw + j]
    return res


def depthwise_backward(real[:, :, :, ::1] xpad, real[:, :, ::1] w, real[:, :, :, ::1] gout,
                       int sh, int sw):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((n, c, xpad.shape[2], xpad.shape[3]), dtype=dtype)
    # per-batch partial weight grads keep the parallel loop race free
    gw_part = np.zeros((n, c, kh, kw), dtype=np.float64)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gwp = gw_part
    cdef Py_ssize_t plane, b, ch, i, j, y, x
    cdef real wv
    cdef double acc
    for plane in prange(n * c, nogil=True, num_threads=_threads, schedule="static"):
        b = plane // c
        ch = plane % c
        for i in range(kh):
            for j in range(kw):
                wv = w[ch, i, j]
                acc = 0
                for y in range(ho):
                    if sw == 1:
                        for x in range(wo):
                            gx[b, ch, y * sh + i, x + j] += wv * gout[b, ch, y, x]
                        for x in range(wo):
                            acc = acc + gout[b, ch, y, x] * xpad[b, ch, y * sh + i, x + j]
                    else:
                        for x in range(wo):
                            gx[b, ch, y * sh + i, x * sw + j] += wv * gout[b, ch, y, x]
                            acc = acc + gout[b, ch, y, x] * xpad[b, ch, y * sh + i, x * sw + j]
                gwp[b, ch, i, j] = acc
    return gx_arr, gw_part.sum(axis=0).astype(dtype)


def maxpool_forward(real[:, :, :, ::1] x, int kh, int kw, int sh, int sw, int ph, int pw,
                    int ho, int wo):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if real is float else np.float64
    res = np.empty((n, c, ho, wo), dtype=dtype)
    idx = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef real[:, :, :, ::1] out = res
    cdef cnp.int64_t[:, :, :, ::1] arg = idx
    cdef Py_ssize_t plane, b, ch, i, j, y, x0, r, q, best
    cdef real m, v
    cdef bint found
    for plane in prange(n * c, nogil=True, num_threads=_threads, schedule="static"):
        b = plane // c
        ch = plane % c
        for y in range(ho):
            for x0 in range(wo):
                found = False
                m = 0
                best = -1
                for i in range(kh):
                    r = y * sh - ph + i
                    if r < 0 or r >= h:
                        continue
                    for j in range(kw):
                        q = x0 * sw - pw + j
                        if q < 0 or q >= w:
                            continue
                        v = x[b, ch, r, q]
                        if not found or v > m:
                            m = v
                            best = r * w + q
                            found = True
                out[b, ch, y, x0] = m
                arg[b, ch, y, x0] = best
    return res, idx


def maxpool_backward(real[:, :, :, ::1] gout, cnp.int64_t[:, :, :, ::1] argmax, int h, int w):
    cdef Py_ssize_t n = gout.shape[0], c = gout.shape[1], ho = gout.shape[2], wo = gout.shape[3]
    dtype = np.float32 if real is float else np.float64
    res = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] gx = res
    cdef Py_ssize_t plane, b, ch, y, x, k
    for plane in prange(n * c, nogil=True, num_threads=_threads, schedule="static"):
        b = plane // c
        ch = plane % c
        for y in range(ho):
            for x in range(wo):
                k = argmax[b, ch, y, x]
                gx[b, ch, k // w, k % w] += gout[b, ch, y, x]
    return res
