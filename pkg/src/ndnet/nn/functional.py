"""Forward and backward passes for every layer primitive.

Each op comes as a ``*_forward`` returning ``(output, cache)`` and a
``*_backward`` consuming the upstream gradient and that cache. The bare names
(``conv2d``, ``relu``, ...) return the forward output only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _backend
from .tensor import ShapeError, as_nchw

Pair = tuple[int, int]


def _pair(v) -> Pair:
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ValueError(f"expected a pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


def out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """Spatial output length of a strided, zero-padded window op."""
    n = (size + 2 * pad - kernel) // stride + 1
    if n < 1:
        raise ShapeError(f"window {kernel} (pad {pad}) does not fit input size {size}")
    return n


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: Pair = (3, 3)
    stride: Pair = (1, 1)
    padding: Pair = (0, 0)
    grouping: Literal["full", "per-channel"] = "full"

    def __post_init__(self):
        for name in ("kernel", "stride", "padding"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ValueError(f"kernel and stride must be >= 1, got {self.kernel}, {self.stride}")
        if min(self.padding) < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.grouping not in ("full", "per-channel"):
            raise ValueError(f"grouping must be 'full' or 'per-channel', got {self.grouping!r}")
        if self.grouping == "per-channel" and self.in_channels != self.out_channels:
            raise ValueError(
                f"per-channel grouping needs in_channels == out_channels, "
                f"got {self.in_channels} != {self.out_channels}"
            )

    @property
    def depthwise(self) -> bool:
        return self.grouping == "per-channel"

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        cin = 1 if self.depthwise else self.in_channels
        return (self.out_channels, cin, *self.kernel)

    def output_hw(self, h: int, w: int) -> Pair:
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        return out_size(h, kh, sh, ph), out_size(w, kw, sw, pw)


def _check_conv(x, w, spec: ConvSpec):
    x = as_nchw(x)
    w = np.asarray(w)
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input channels {x.shape[1]} != spec.in_channels {spec.in_channels}")
    if w.shape != spec.weight_shape:
        for axis, (got, want) in enumerate(zip(w.shape, spec.weight_shape)):
            if got != want:
                dim = ("out_channels", "in_channels/groups", "kernel height", "kernel width")[axis]
                raise ShapeError(f"weights {dim} is {got}, expected {want} (weights {w.shape})")
        raise ShapeError(f"weights must have shape {spec.weight_shape}, got {w.shape}")
    return x, np.ascontiguousarray(w, dtype=x.dtype)


def _pad(x, ph, pw):
    if ph == 0 and pw == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


# --------------------------------------------------------------- convolution


def conv2d_forward(x, w, spec: ConvSpec):
    if spec.depthwise:
        return conv2d_depthwise_forward(x, w, spec)
    x, w = _check_conv(x, w, spec)
    n, c, h, wd = x.shape
    (kh, kw), (sh, sw), (ph, pw) = spec.kernel, spec.stride, spec.padding
    ho, wo = spec.output_hw(h, wd)
    wmat = w.reshape(spec.out_channels, -1)
    if (kh, kw) == (1, 1) and (ph, pw) == (0, 0):
        sub = x[:, :, ::sh, ::sw] if (sh, sw) != (1, 1) else x
        cols = np.ascontiguousarray(sub).reshape(n, c, ho * wo)
    else:
        xpad = _pad(x, ph, pw)
        cols = _backend.kernels.im2col(xpad, kh, kw, sh, sw, ho, wo)
    y = np.matmul(wmat, cols).reshape(n, spec.out_channels, ho, wo)
    return y, (x.shape, cols, w, spec)


def conv2d_backward(gy, cache):
    xshape, cols, w, spec = cache
    if spec.depthwise:
        return conv2d_depthwise_backward(gy, cache)
    n, c, h, wd = xshape
    (kh, kw), (sh, sw), (ph, pw) = spec.kernel, spec.stride, spec.padding
    ho, wo = gy.shape[2:]
    g = np.ascontiguousarray(gy, dtype=cols.dtype).reshape(n, spec.out_channels, ho * wo)
    wmat = w.reshape(spec.out_channels, -1)
    gw = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    gcols = np.matmul(wmat.T, g)
    if (kh, kw) == (1, 1) and (ph, pw) == (0, 0):
        gsub = gcols.reshape(n, c, ho, wo)
        if (sh, sw) == (1, 1):
            return gsub, gw
        gx = np.zeros(xshape, dtype=gcols.dtype)
        gx[:, :, ::sh, ::sw] = gsub
        return gx, gw
    gpad = _backend.kernels.col2im(
        np.ascontiguousarray(gcols), c, h + 2 * ph, wd + 2 * pw, kh, kw, sh, sw, ho, wo
    )
    return gpad[:, :, ph:ph + h, pw:pw + wd], gw


def conv2d(x, w, spec: ConvSpec) -> np.ndarray:
    return conv2d_forward(x, w, spec)[0]


def conv2d_depthwise_forward(x, w, spec: ConvSpec):
    if not spec.depthwise:
        raise ValueError("conv2d_depthwise requires per-channel grouping")
    x, w = _check_conv(x, w, spec)
    (kh, kw), (sh, sw), (ph, pw) = spec.kernel, spec.stride, spec.padding
    ho, wo = spec.output_hw(*x.shape[2:])
    xpad = _pad(x, ph, pw)
    w3 = np.ascontiguousarray(w.reshape(spec.out_channels, kh, kw))
    y = _backend.kernels.depthwise_forward(xpad, w3, sh, sw, ho, wo)
    return y, (x.shape, xpad, w, spec)


def conv2d_depthwise_backward(gy, cache):
    xshape, xpad, w, spec = cache
    (kh, kw), (sh, sw), (ph, pw) = spec.kernel, spec.stride, spec.padding
    h, wd = xshape[2:]
    w3 = np.ascontiguousarray(w.reshape(spec.out_channels, kh, kw))
    gpad, gw = _backend.kernels.depthwise_backward(
        xpad, w3, np.ascontiguousarray(gy, dtype=xpad.dtype), sh, sw
    )
    return gpad[:, :, ph:ph + h, pw:pw + wd], gw.reshape(w.shape)


def conv2d_depthwise(x, w, spec: ConvSpec) -> np.ndarray:
    return conv2d_depthwise_forward(x, w, spec)[0]


def asymmetric_specs(spec: ConvSpec, mid_channels: int | None = None) -> tuple[ConvSpec, ConvSpec]:
    """Split a 3x3 spec into its (3,1) and (1,3) stages.

    Rows are strided/padded by the first stage, columns by the second, so the
    composite output shape equals that of the 3x3 spec.
    """
    if spec.kernel != (3, 3):
        raise ValueError(f"asymmetric factorization is defined for 3x3 specs, got {spec.kernel}")
    if spec.depthwise:
        raise ValueError("asymmetric factorization uses full grouping")
    mid = spec.out_channels if mid_channels is None else mid_channels
    (sh, sw), (ph, pw) = spec.stride, spec.padding
    first = ConvSpec(spec.in_channels, mid, (3, 1), (sh, 1), (ph, 0))
    second = ConvSpec(mid, spec.out_channels, (1, 3), (1, sw), (0, pw))
    return first, second


def conv2d_asymmetric_forward(x, w31, w13, spec: ConvSpec):
    w31, w13 = np.asarray(w31), np.asarray(w13)
    if w31.ndim != 4 or w31.shape[2:] != (3, 1):
        raise ShapeError(f"first asymmetric kernel must be (3, 1), got weights {w31.shape}")
    if w13.ndim != 4 or w13.shape[2:] != (1, 3):
        raise ShapeError(f"second asymmetric kernel must be (1, 3), got weights {w13.shape}")
    first, second = asymmetric_specs(spec, mid_channels=w31.shape[0])
    mid, c1 = conv2d_forward(x, w31, first)
    y, c2 = conv2d_forward(mid, w13, second)
    return y, (c1, c2)


def conv2d_asymmetric_backward(gy, cache):
    c1, c2 = cache
    gmid, g13 = conv2d_backward(gy, c2)
    gx, g31 = conv2d_backward(gmid, c1)
    return gx, g31, g13


def conv2d_asymmetric(x, w31, w13, spec: ConvSpec) -> np.ndarray:
    return conv2d_asymmetric_forward(x, w31, w13, spec)[0]


# ------------------------------------------------------------------- pooling


def maxpool2d_forward(x, kernel=(3, 3), stride=(2, 2), padding=(1, 1)):
    x = as_nchw(x)
    (kh, kw), (sh, sw), (ph, pw) = _pair(kernel), _pair(stride), _pair(padding)
    if min(kh, kw, sh, sw) < 1 or min(ph, pw) < 0:
        raise ValueError("kernel/stride must be >= 1 and padding >= 0")
    if ph >= kh or pw >= kw:
        raise ValueError(
            f"padding {(ph, pw)} >= kernel {(kh, kw)}: border windows would lie entirely in padding"
        )
    h, w = x.shape[2:]
    ho, wo = out_size(h, kh, sh, ph), out_size(w, kw, sw, pw)
    # the last window must still start inside the real input
    if (ho - 1) * sh - ph >= h or (wo - 1) * sw - pw >= w:
        raise ValueError("degenerate pooling: a window lies entirely inside padding")
    y, arg = _backend.kernels.maxpool_forward(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw, ho, wo)
    return y, (x.shape, arg)


def maxpool2d_backward(gy, cache):
    xshape, arg = cache
    return _backend.kernels.maxpool_backward(np.ascontiguousarray(gy), arg, xshape[2], xshape[3])


def maxpool2d(x, kernel=(3, 3), stride=(2, 2), padding=(1, 1)) -> np.ndarray:
    return maxpool2d_forward(x, kernel, stride, padding)[0]


# --------------------------------------------------------------- batch norm


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics.

    ``running_mean``/``running_var`` set to ``None`` mean "never initialized";
    eval mode refuses to run in that case.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    eps: float = 1e-5
    momentum: float = 0.1
    mode: Literal["train", "eval"] = "train"

    @classmethod
    def create(cls, channels: int, eps=1e-5, momentum=0.1, dtype=np.float32, initialized=True):
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype) if initialized else None,
            running_var=np.ones(channels, dtype=dtype) if initialized else None,
            eps=eps,
            momentum=momentum,
        )

    def __post_init__(self):
        c = len(self.gamma)
        for name in ("beta", "running_mean", "running_var"):
            v = getattr(self, name)
            if v is not None and len(v) != c:
                raise ShapeError(f"{name} has length {len(v)}, expected {c}")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.running_var is not None and np.any(np.asarray(self.running_var) < 0):
            raise ValueError("running_var must be non-negative")

    @property
    def channels(self) -> int:
        return len(self.gamma)

    def blend(self, batch_mean, batch_var) -> None:
        """Running-stat update: new = (1 - momentum) * old + momentum * batch."""
        m = self.momentum
        dtype = np.asarray(self.gamma).dtype
        if self.running_mean is None:
            self.running_mean = np.zeros(self.channels, dtype=dtype)
            self.running_var = np.ones(self.channels, dtype=dtype)
        self.running_mean = ((1 - m) * self.running_mean + m * batch_mean).astype(dtype)
        self.running_var = ((1 - m) * self.running_var + m * batch_var).astype(dtype)


def batchnorm_forward(x, state: BatchNormState, update_stats: bool = True):
    x = as_nchw(x)
    if x.shape[1] != state.channels:
        raise ShapeError(f"input has {x.shape[1]} channels, batchnorm state has {state.channels}")
    gamma = np.asarray(state.gamma, dtype=x.dtype).reshape(1, -1, 1, 1)
    beta = np.asarray(state.beta, dtype=x.dtype).reshape(1, -1, 1, 1)
    if state.mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update_stats:
            state.blend(mean, var)
    else:
        if state.running_mean is None or state.running_var is None:
            raise ValueError("batchnorm in eval mode needs initialized running statistics")
        mean = np.asarray(state.running_mean, dtype=x.dtype)
        var = np.asarray(state.running_var, dtype=x.dtype)
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype).reshape(1, -1, 1, 1)
    xhat = (x - mean.astype(x.dtype).reshape(1, -1, 1, 1)) * inv_std
    y = xhat * gamma + beta
    return y, (xhat, inv_std, gamma, state.mode)


def batchnorm_backward(gy, cache):
    """Return (grad input, grad gamma, grad beta)."""
    xhat, inv_std, gamma, mode = cache
    gbeta = gy.sum(axis=(0, 2, 3))
    ggamma = (gy * xhat).sum(axis=(0, 2, 3))
    if mode == "train":
        m = gy.shape[0] * gy.shape[2] * gy.shape[3]
        gx = (gamma * inv_std / m) * (
            m * gy - gbeta.reshape(1, -1, 1, 1) - xhat * ggamma.reshape(1, -1, 1, 1)
        )
    else:
        gx = gy * gamma * inv_std
    return gx, ggamma, gbeta


def batchnorm(x, state: BatchNormState) -> np.ndarray:
    return batchnorm_forward(x, state)[0]


# --------------------------------------------------------------------- relu


def relu_forward(x):
    x = np.asarray(x)
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(gy, mask):
    return np.where(mask, gy, 0).astype(gy.dtype, copy=False)


def relu(x) -> np.ndarray:
    return relu_forward(x)[0]


# ---------------------------------------------------------------- upsampling


def interp_matrix(n: int, factor: int) -> np.ndarray:
    """Dense (n*factor, n) linear interpolation matrix, half-pixel centres."""
    src = (np.arange(n * factor) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    lam = src - i0
    a = np.zeros((n * factor, n))
    rows = np.arange(n * factor)
    np.add.at(a, (rows, i0), 1.0 - lam)
    np.add.at(a, (rows, i1), lam)
    return a


def bilinear_upsample_forward(x, factor: int):
    x = as_nchw(x)
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return x.copy(), (1, None, None)
    ah = interp_matrix(x.shape[2], factor).astype(x.dtype)
    aw = interp_matrix(x.shape[3], factor).astype(x.dtype)
    y = np.matmul(np.matmul(ah, x), aw.T)
    return y, (factor, ah, aw)


def bilinear_upsample_backward(gy, cache):
    factor, ah, aw = cache
    if factor == 1:
        return gy.copy()
    return np.matmul(np.matmul(ah.T, gy), aw)


def bilinear_upsample(x, factor: int) -> np.ndarray:
    return bilinear_upsample_forward(x, factor)[0]


# ---------------------------------------------------------------------- loss


def softmax_cross_entropy(logits, labels, ignore_index: int = 255):
    """Mean per-pixel cross entropy over non-ignored pixels.

    Returns ``(loss, grad)`` where ``grad`` has the logits' shape.
    """
    logits = as_nchw(logits, "logits")
    labels = np.asarray(labels)
    n, k, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels shape {labels.shape} != (n, h, w) = {(n, h, w)}")
    valid = labels != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise ValueError("every pixel is ignored; the mean loss is undefined")
    bad = valid & ((labels < 0) | (labels >= k))
    if bad.any():
        raise ValueError(f"label values {np.unique(labels[bad])} outside [0, {k - 1}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    safe = np.where(valid, labels, 0).astype(np.int64)
    picked = np.take_along_axis(logp, safe[:, None], axis=1)[:, 0]
    loss = -float(picked[valid].sum(dtype=np.float64)) / count
    grad = np.exp(logp)
    nz = np.nonzero(valid)
    grad[nz[0], safe[valid], nz[1], nz[2]] -= 1.0
    grad *= valid[:, None] / count
    return loss, grad.astype(logits.dtype, copy=False)
