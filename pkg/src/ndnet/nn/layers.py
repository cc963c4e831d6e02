"""Stateful layer modules with cached forward activations and manual backward.

A module's ``forward`` stores whatever its ``backward`` needs; ``backward``
accumulates parameter gradients into each :class:`Tensor.grad` and returns the
gradient with respect to the module input. Modules also resolve output shapes
and Multi-adds analytically so cost reports never run a numeric forward.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor

Shape = tuple[int, int, int, int]


class Module:
    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: Shape) -> Shape:
        return shape

    def children(self) -> Iterator[tuple[str, "Module"]]:
        return iter(())

    def own_tensors(self) -> Iterator[tuple[str, Tensor]]:
        return iter(())

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for path, mod in self.named_modules(prefix):
            for name, t in mod.own_tensors():
                yield (f"{path}.{name}" if path else name), t


class Conv2d(Module):
    """Bias-free convolution; ``spec.grouping`` selects full or depthwise."""

    def __init__(self, spec: F.ConvSpec, dtype=np.float32):
        self.spec = spec
        self.weight = Tensor(np.zeros(spec.weight_shape), dtype=dtype)
        self._cache = None

    def forward(self, x, train):
        y, cache = F.conv2d_forward(x, self.weight.data, self.spec)
        self._cache = cache if train else None
        return y

    def backward(self, g):
        gx, gw = F.conv2d_backward(g, self._cache)
        self.weight.accumulate(gw)
        self._cache = None
        return gx

    def output_shape(self, shape):
        if shape[1] != self.spec.in_channels:
            raise F.ShapeError(f"conv expects {self.spec.in_channels} channels, got {shape[1]}")
        return (shape[0], self.spec.out_channels, *self.spec.output_hw(*shape[2:]))

    def multi_adds(self, shape: Shape) -> int:
        n, _, ho, wo = self.output_shape(shape)
        kh, kw = self.spec.kernel
        fan_in = 1 if self.spec.depthwise else self.spec.in_channels
        return n * kh * kw * fan_in * self.spec.out_channels * ho * wo

    @property
    def fan_out(self) -> int:
        kh, kw = self.spec.kernel
        return kh * kw * (1 if self.spec.depthwise else self.spec.out_channels)

    def own_tensors(self):
        yield "weight", self.weight

    def __repr__(self):
        s = self.spec
        kind = "dw" if s.depthwise else "conv"
        return f"{kind}{s.kernel[0]}x{s.kernel[1]}({s.in_channels}->{s.out_channels}, s={s.stride[0]})"


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.gamma = Tensor(np.ones(channels), dtype=dtype)
        self.beta = Tensor(np.zeros(channels), dtype=dtype)
        # state shares memory with the gamma/beta tensors so optimizer updates are seen
        self.state = F.BatchNormState(
            self.gamma.data, self.beta.data, None, None, eps=eps, momentum=momentum
        )
        self._cache = None

    @property
    def channels(self) -> int:
        return self.state.channels

    def forward(self, x, train):
        self.state.mode = "train" if train else "eval"
        y, cache = F.batchnorm_forward(x, self.state)
        self._cache = cache if train else None
        return y

    def backward(self, g):
        gx, ggamma, gbeta = F.batchnorm_backward(g, self._cache)
        self.gamma.accumulate(ggamma)
        self.beta.accumulate(gbeta)
        self._cache = None
        return gx

    def output_shape(self, shape):
        if shape[1] != self.channels:
            raise F.ShapeError(f"batchnorm expects {self.channels} channels, got {shape[1]}")
        return shape

    def reset_parameters(self) -> None:
        self.gamma.data[...] = 1
        self.beta.data[...] = 0
        dtype = self.gamma.data.dtype
        self.state.running_mean = np.zeros(self.channels, dtype=dtype)
        self.state.running_var = np.ones(self.channels, dtype=dtype)

    def own_tensors(self):
        yield "gamma", self.gamma
        yield "beta", self.beta

    def __repr__(self):
        return f"bn({self.channels})"


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x, train):
        y, mask = F.relu_forward(x)
        self._mask = mask if train else None
        return y

    def backward(self, g):
        gx = F.relu_backward(g, self._mask)
        self._mask = None
        return gx

    def __repr__(self):
        return "relu"


class MaxPool2d(Module):
    def __init__(self, kernel=3, stride=2, padding=1):
        self.kernel, self.stride, self.padding = F._pair(kernel), F._pair(stride), F._pair(padding)
        self._cache = None

    def forward(self, x, train):
        y, cache = F.maxpool2d_forward(x, self.kernel, self.stride, self.padding)
        self._cache = cache if train else None
        return y

    def backward(self, g):
        gx = F.maxpool2d_backward(g, self._cache)
        self._cache = None
        return gx

    def output_shape(self, shape):
        hw = [F.out_size(s, k, st, p) for s, k, st, p in zip(shape[2:], self.kernel, self.stride, self.padding)]
        return (shape[0], shape[1], *hw)

    def __repr__(self):
        return f"maxpool{self.kernel[0]}x{self.kernel[1]}(s={self.stride[0]})"


class Upsample(Module):
    """Fixed bilinear upsampling by an integer factor (no parameters)."""

    def __init__(self, factor: int):
        if factor < 1:
            raise ValueError("upsampling factor must be >= 1")
        self.factor = factor
        self._cache = None

    def forward(self, x, train):
        y, cache = F.bilinear_upsample_forward(x, self.factor)
        self._cache = cache if train else None
        return y

    def backward(self, g):
        gx = F.bilinear_upsample_backward(g, self._cache)
        self._cache = None
        return gx

    def output_shape(self, shape):
        return (shape[0], shape[1], shape[2] * self.factor, shape[3] * self.factor)

    def __repr__(self):
        return f"upsample(x{self.factor})"


class Sequential(Module):
    def __init__(self, *layers: tuple[str, Module]):
        self.layers: list[tuple[str, Module]] = list(layers)

    def append(self, name: str, layer: Module) -> None:
        self.layers.append((name, layer))

    def __getitem__(self, name: str) -> Module:
        for n, layer in self.layers:
            if n == name:
                return layer
        raise KeyError(name)

    def __len__(self):
        return len(self.layers)

    def children(self):
        return iter(self.layers)

    def forward(self, x, train):
        for _, layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for _, layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def output_shape(self, shape):
        for _, layer in self.layers:
            shape = layer.output_shape(shape)
        return shape


class Residual(Module):
    """``relu(main(s) + s)`` where ``s`` is the input or its projection.

    When a projection is present it runs first and feeds both the main path
    and the shortcut, so the main path always sees the block's own width.
    """

    def __init__(self, main: Sequential, projection: Sequential | None = None):
        self.main = main
        self.projection = projection
        self._mask = None

    def children(self):
        if self.projection is not None:
            yield "proj", self.projection
        yield "main", self.main

    def forward(self, x, train):
        s = self.projection.forward(x, train) if self.projection is not None else x
        z = self.main.forward(s, train) + s
        mask = z > 0
        self._mask = mask if train else None
        return np.where(mask, z, 0).astype(z.dtype, copy=False)

    def backward(self, g):
        g = F.relu_backward(g, self._mask)
        self._mask = None
        gs = self.main.backward(g) + g
        return self.projection.backward(gs) if self.projection is not None else gs

    def output_shape(self, shape):
        s = self.projection.output_shape(shape) if self.projection is not None else shape
        out = self.main.output_shape(s)
        if out != s:
            raise F.ShapeError(f"residual main path maps {s} to {out}; shapes must match for the add")
        return out
