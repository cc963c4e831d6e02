"""Build narrow bottleneck layers, NDNet backbones and the FCN32 head."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np

from ..nn.functional import ConvSpec
from ..nn.layers import BatchNorm2d, Conv2d, MaxPool2d, Module, ReLU, Residual, Sequential, Upsample
from ..nn.tensor import ShapeError, Tensor, as_nchw
from .specs import NarrowBottleneckSpec, NetworkSpec

OUTPUT_STRIDE = 32


def _conv_bn(seq: Sequential, tag: str, spec: ConvSpec, relu: bool = True, eps=1e-5, momentum=0.1):
    seq.append(tag, Conv2d(spec))
    seq.append(f"{tag}_bn", BatchNorm2d(spec.out_channels, eps, momentum))
    if relu:
        seq.append(f"{tag}_relu", ReLU())


def build_narrow_bottleneck(spec: NarrowBottleneckSpec, eps=1e-5, momentum=0.1) -> Residual:
    """Two stacked separable convs whose pointwise stages reduce then restore width.

    dw3x3(e*n) -> 1x1(e*n -> n) -> dw3x3(n) -> 1x1(n -> e*n), BN after every
    conv, ReLU after all but the last BN, ReLU again after the shortcut add.
    With a projection shortcut, a strided 1x1 conv + BN maps the input to the
    outer width first and feeds both paths.
    """
    wide, n = spec.width, spec.n_md
    main = Sequential()
    _conv_bn(main, "dw1", ConvSpec(wide, wide, 3, 1, 1, "per-channel"), eps=eps, momentum=momentum)
    _conv_bn(main, "pw1", ConvSpec(wide, n, 1), eps=eps, momentum=momentum)
    _conv_bn(main, "dw2", ConvSpec(n, n, 3, 1, 1, "per-channel"), eps=eps, momentum=momentum)
    _conv_bn(main, "pw2", ConvSpec(n, wide, 1), relu=False, eps=eps, momentum=momentum)
    proj = None
    if spec.shortcut == "projection":
        proj = Sequential()
        _conv_bn(proj, "conv", ConvSpec(spec.in_channels, wide, 1, spec.stride), relu=False,
                 eps=eps, momentum=momentum)
    return Residual(main, proj)


def build_original_bottleneck(n_md: int, e: int = 4, eps=1e-5, momentum=0.1) -> Residual:
    """Classic 1x1 reduce -> 3x3 -> 1x1 restore residual layer, for comparison."""
    wide = e * n_md
    main = Sequential()
    _conv_bn(main, "reduce", ConvSpec(wide, n_md, 1), eps=eps, momentum=momentum)
    _conv_bn(main, "conv3", ConvSpec(n_md, n_md, 3, 1, 1), eps=eps, momentum=momentum)
    _conv_bn(main, "restore", ConvSpec(n_md, wide, 1), relu=False, eps=eps, momentum=momentum)
    return Residual(main)


def build_plain_block(width: int, depth: int = 3) -> Sequential:
    """``depth`` standard 3x3 convs at constant width (the same-width baseline)."""
    seq = Sequential()
    for i in range(depth):
        _conv_bn(seq, f"conv{i + 1}", ConvSpec(width, width, 3, 1, 1))
    return seq


@dataclass
class LayerGraph:
    """An executable network: a module tree plus the NetworkSpec that produced it.

    Children of ``root`` are named stages (``stem``, ``pool``, ``block1``..,
    ``head``); residual shortcuts live inside :class:`Residual` nodes.
    """

    spec: NetworkSpec
    root: Sequential
    has_head: bool = False
    roles: dict[str, str] = field(default_factory=dict)

    # ------------------------------------------------------------ traversal

    def named_modules(self) -> Iterator[tuple[str, Module]]:
        return self.root.named_modules()

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return self.root.named_parameters()

    def convs(self) -> Iterator[tuple[str, Conv2d]]:
        for name, mod in self.named_modules():
            if isinstance(mod, Conv2d):
                yield name, mod

    def batchnorms(self) -> Iterator[tuple[str, BatchNorm2d]]:
        for name, mod in self.named_modules():
            if isinstance(mod, BatchNorm2d):
                yield name, mod

    def stage(self, name: str) -> Module:
        return self.root[name]

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Every stored numeric array: parameters plus BN running statistics."""
        out = {name: t.data for name, t in self.named_parameters()}
        for name, bn in self.batchnorms():
            if bn.state.running_mean is not None:
                out[f"{name}.running_mean"] = bn.state.running_mean
                out[f"{name}.running_var"] = bn.state.running_var
        return out

    @property
    def nominal_depth(self) -> int:
        return self.spec.nominal_depth

    @property
    def out_channels(self) -> int:
        return self.root.output_shape((1, 3, OUTPUT_STRIDE, OUTPUT_STRIDE))[1]

    # ------------------------------------------------------------ execution

    def output_shape(self, shape) -> tuple[int, int, int, int]:
        return self.root.output_shape(tuple(shape))

    def stage_shapes(self, shape) -> list[tuple[str, tuple[int, int, int, int]]]:
        rows = []
        shape = tuple(shape)
        for name, layer in self.root.layers:
            shape = layer.output_shape(shape)
            rows.append((name, shape))
        return rows

    def check_input(self, x: np.ndarray) -> np.ndarray:
        x = as_nchw(x)
        self.check_input_shape(x.shape)
        return x

    def check_input_shape(self, shape) -> None:
        if shape[1] != 3:
            raise ShapeError(f"input must have 3 channels, got {shape[1]}")
        h, w = shape[2:]
        if h % OUTPUT_STRIDE or w % OUTPUT_STRIDE:
            ph, pw = -h % OUTPUT_STRIDE, -w % OUTPUT_STRIDE
            raise ShapeError(
                f"input {h}x{w} is not divisible by {OUTPUT_STRIDE}; "
                f"pad by {ph} rows and {pw} columns (to {h + ph}x{w + pw})"
            )

    def forward(self, x, mode: Literal["train", "eval"] = "eval") -> np.ndarray:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = self.check_input(x)
        return self.root.forward(x, mode == "train")

    def backward(self, g: np.ndarray) -> np.ndarray:
        return self.root.backward(g)

    def zero_grad(self) -> None:
        for _, t in self.named_parameters():
            t.zero_grad()

    def describe(self) -> str:
        lines = [f"{self.spec.name or 'ndnet'}: depth {self.nominal_depth}, "
                 f"channels {list(self.spec.channel_combination)}, depths {list(self.spec.depth_combination)}, "
                 f"e={self.spec.e}"]
        for name, mod in self.named_modules():
            if isinstance(mod, (Conv2d, MaxPool2d, Upsample)):
                lines.append(f"  {name}: {mod!r}")
        return "\n".join(lines)


def build_ndnet(spec: NetworkSpec, bn_eps: float = 1e-5, bn_momentum: float = 0.1) -> LayerGraph:
    """Stem (3x3/2 conv + 3x3/2 max-pool) then three narrow residual blocks.

    The first layer of each block halves the resolution through its
    projection shortcut. Parameters are zero until :func:`init_params`.
    """
    root = Sequential()
    stem = Sequential()
    _conv_bn(stem, "conv1", ConvSpec(3, spec.stem_width, 3, 2, 1), eps=bn_eps, momentum=bn_momentum)
    root.append("stem", stem)
    root.append("pool", MaxPool2d(3, 2, 1))
    roles = {"stem": "stem", "pool": "stem"}
    width = spec.stem_width
    for i, block in enumerate(spec.blocks, start=1):
        seq = Sequential()
        for j in range(block.d):
            layer = NarrowBottleneckSpec(
                block.n_md, block.e, stride=2 if j == 0 else 1, in_channels=width
            )
            seq.append(str(j), build_narrow_bottleneck(layer, bn_eps, bn_momentum))
            width = layer.width
        root.append(f"block{i}", seq)
        roles[f"block{i}"] = "block"
    return LayerGraph(spec, root, roles=roles)


def attach_fcn32_head(backbone: LayerGraph, num_classes: int | None = None,
                      bn_eps: float = 1e-5, bn_momentum: float = 0.1) -> LayerGraph:
    """3x3 conv (C -> C) + BN + ReLU, 1x1 classifier, bilinear x32 upsample."""
    if backbone.has_head:
        raise ValueError("graph already has a segmentation head")
    k = backbone.spec.num_classes if num_classes is None else num_classes
    c = backbone.out_channels
    head = Sequential()
    _conv_bn(head, "context", ConvSpec(c, c, 3, 1, 1), eps=bn_eps, momentum=bn_momentum)
    head.append("classifier", Conv2d(ConvSpec(c, k, 1)))
    head.append("upsample", Upsample(OUTPUT_STRIDE))
    root = Sequential(*backbone.root.layers, ("head", head))
    roles = dict(backbone.roles, head="head")
    return LayerGraph(backbone.spec.with_(num_classes=k), root, has_head=True, roles=roles)


def build_segmenter(spec: NetworkSpec, seed: int | None = 0, **bn) -> LayerGraph:
    graph = attach_fcn32_head(build_ndnet(spec, **bn), **bn)
    if seed is not None:
        init_params(graph, seed)
    return graph


def init_params(graph: LayerGraph, seed: int = 0) -> LayerGraph:
    """He-style init, zero-mean normal with std sqrt(2 / fan_out), BN reset."""
    rng = np.random.default_rng(seed)
    for _, conv in graph.convs():
        w = conv.weight
        std = np.sqrt(2.0 / conv.fan_out)
        w.data[...] = rng.normal(0.0, std, size=w.shape)
        w.zero_grad()
    for _, bn in graph.batchnorms():
        bn.reset_parameters()
    return graph


def forward(graph: LayerGraph, x, mode: Literal["train", "eval"] = "eval") -> np.ndarray:
    return graph.forward(x, mode)
