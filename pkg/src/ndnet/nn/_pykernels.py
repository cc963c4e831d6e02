"""Pure numpy convolution and pooling kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``NDNET_KERNELS=python`` is set. The signatures mirror the Cython module
exactly so the two are interchangeable.

Inputs to the convolution kernels are already zero padded. All arrays are
NCHW and C-contiguous.
"""

from __future__ import annotations

import numpy as np


def im2col(xpad, kh, kw, sh, sw, ho, wo):
    """Unfold padded input into columns of shape (N, C*kh*kw, ho*wo)."""
    n, c = xpad.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xpad.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xpad[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw]
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im(cols, c, hp, wp, kh, kw, sh, sw, ho, wo):
    """Adjoint of :func:`im2col`: scatter-add columns into a padded image."""
    n = cols.shape[0]
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += cols[:, :, i, j]
    return out


def depthwise_forward(xpad, w, sh, sw, ho, wo):
    """Per-channel correlation. ``w`` has shape (C, kh, kw)."""
    n, c = xpad.shape[:2]
    kh, kw = w.shape[1:]
    out = np.zeros((n, c, ho, wo), dtype=xpad.dtype)
    for i in range(kh):
        for j in range(kw):
            out += w[None, :, i, j, None, None] * xpad[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw]
    return out


def depthwise_backward(xpad, w, gout, sh, sw):
    """Return (grad wrt padded input, grad wrt weights)."""
    kh, kw = w.shape[1:]
    ho, wo = gout.shape[2:]
    gx = np.zeros_like(xpad)
    gw = np.empty_like(w)
    for i in range(kh):
        for j in range(kw):
            win = xpad[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw]
            gw[:, i, j] = np.einsum("nchw,nchw->c", gout, win)
            gx[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += w[None, :, i, j, None, None] * gout
    return gx, gw


def maxpool_forward(x, kh, kw, sh, sw, ph, pw, ho, wo):
    """Max over windows; returns (out, argmax) with argmax as flat h*W+w index.

    Ties resolve to the first position in row-major window order.
    """
    n, c, h, w = x.shape
    xpad = np.full((n, c, h + 2 * ph, w + 2 * pw), -np.inf, dtype=x.dtype)
    xpad[:, :, ph:ph + h, pw:pw + w] = x
    win = np.empty((kh * kw, n, c, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            win[i * kw + j] = xpad[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw]
    k = np.argmax(win, axis=0)
    out = np.take_along_axis(win, k[None], axis=0)[0]
    rows = np.arange(ho)[:, None] * sh - ph + k // kw
    cols = np.arange(wo)[None, :] * sw - pw + k % kw
    return out, (rows * w + cols).astype(np.int64)


def maxpool_backward(gout, argmax, h, w):
    n, c = gout.shape[:2]
    base = (np.arange(n * c, dtype=np.int64) * (h * w)).reshape(n, c, 1, 1)
    flat = np.bincount((argmax + base).ravel(), weights=gout.ravel(), minlength=n * c * h * w)
    return flat.astype(gout.dtype).reshape(n, c, h, w)


def set_num_threads(n):
    """No-op; numpy kernels thread only through BLAS."""


def get_num_threads():
    return 1
