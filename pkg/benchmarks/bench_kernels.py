"""Compare the compiled and numpy kernel backends.

Times each hot kernel in isolation, then a full eval-mode FCN32 forward.

    python benchmarks/bench_kernels.py [--input 512x1024] [--arch ndnet45] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ndnet.model import build_segmenter, resolve_arch
from ndnet.nn import _backend
from ndnet.nn import functional as F


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times) * 1000.0


def kernel_cases(rng, h, w):
    x64 = rng.standard_normal((1, 64, h // 8, w // 8)).astype(np.float32)
    x32 = rng.standard_normal((1, 32, h // 2, w // 2)).astype(np.float32)
    img = rng.standard_normal((1, 3, h, w)).astype(np.float32)
    dw_spec = F.ConvSpec(64, 64, 3, 1, 1, "per-channel")
    dw_w = rng.standard_normal(dw_spec.weight_shape).astype(np.float32)
    stem_spec = F.ConvSpec(3, 32, 3, 2, 1)
    stem_w = rng.standard_normal(stem_spec.weight_shape).astype(np.float32)
    y, cache = F.conv2d_depthwise_forward(x64, dw_w, dw_spec)
    g = np.ones_like(y)
    _, pcache = F.maxpool2d_forward(x32)
    pg = np.ones((1, 32, h // 4, w // 4), np.float32)
    return {
        "depthwise fwd": lambda: F.conv2d_depthwise(x64, dw_w, dw_spec),
        "depthwise bwd": lambda: F.conv2d_depthwise_backward(g, cache),
        "stem conv (im2col)": lambda: F.conv2d(img, stem_w, stem_spec),
        "maxpool fwd": lambda: F.maxpool2d(x32),
        "maxpool bwd": lambda: F.maxpool2d_backward(pg, pcache),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--input", default="512x1024")
    p.add_argument("--arch", default="ndnet45")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    h, w = (int(v) for v in args.input.split("x"))
    rng = np.random.default_rng(0)

    backends = ["python"]
    try:
        _backend.load("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the numpy backend only")

    results = {}
    graph = build_segmenter(resolve_arch(args.arch), seed=0)
    x = rng.standard_normal((1, 3, h, w)).astype(np.float32)
    for name in backends:
        _backend.use(name)
        row = {k: best_of(fn, args.repeat) for k, fn in kernel_cases(rng, h, w).items()}
        graph.forward(x, "eval")
        row[f"{args.arch} FCN32 forward"] = best_of(lambda: graph.forward(x, "eval"), args.repeat)
        results[name] = row

    keys = list(results[backends[0]])
    width = max(map(len, keys))
    print(f"input {h}x{w}, best of {args.repeat} (ms)")
    print(f"{'case':<{width}}  " + "  ".join(f"{b:>10}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for k in keys:
        cells = "  ".join(f"{results[b][k]:>10.2f}" for b in backends)
        extra = f"  {results['python'][k] / results['cython'][k]:>9.2f}x" if len(backends) > 1 else ""
        print(f"{k:<{width}}  {cells}{extra}")


if __name__ == "__main__":
    main()
