from .builder import (
    OUTPUT_STRIDE,
    LayerGraph,
    attach_fcn32_head,
    build_narrow_bottleneck,
    build_ndnet,
    build_original_bottleneck,
    build_plain_block,
    build_segmenter,
    forward,
    init_params,
)
from .specs import PRESETS, BlockSpec, NarrowBottleneckSpec, NetworkSpec, load_arch, resolve_arch, save_arch

__all__ = [
    "OUTPUT_STRIDE",
    "PRESETS",
    "BlockSpec",
    "LayerGraph",
    "NarrowBottleneckSpec",
    "NetworkSpec",
    "attach_fcn32_head",
    "build_narrow_bottleneck",
    "build_ndnet",
    "build_original_bottleneck",
    "build_plain_block",
    "build_segmenter",
    "forward",
    "init_params",
    "load_arch",
    "resolve_arch",
    "save_arch",
]
