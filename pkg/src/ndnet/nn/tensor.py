from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when array shapes disagree with an op's contract."""


class Tensor:
    """A dense float array with an optional same-shape gradient buffer.

    Activations are NCHW; parameters (conv weights, BN vectors) reuse the same
    container with their natural rank.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None, dtype=np.float32):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        if self.data.size == 0 or min(self.data.shape, default=1) < 1:
            raise ShapeError(f"tensor dimensions must all be >= 1, got {self.data.shape}")
        self.grad = None
        if grad is not None:
            self.set_grad(grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def set_grad(self, grad) -> None:
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            raise ShapeError(f"grad shape {grad.shape} != data shape {self.data.shape}")
        self.grad = grad

    def accumulate(self, grad) -> None:
        if self.grad is None:
            self.set_grad(np.array(grad, dtype=self.data.dtype))
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


def as_nchw(x, name: str = "input") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (n, c, h, w), got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name} dimensions must all be >= 1, got {x.shape}")
    return x
