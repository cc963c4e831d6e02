"""Kernel backend selection.

The compiled extension is preferred. Set ``NDNET_KERNELS=python`` to force the
numpy fallback; ``NDNET_THREADS`` caps the compiled kernels' thread count.
"""

from __future__ import annotations

import os
from importlib import import_module
from types import ModuleType

_NAMES = {"cython": "ndnet.nn._ckernels", "python": "ndnet.nn._pykernels"}


def load(name: str) -> ModuleType:
    if name not in _NAMES:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {sorted(_NAMES)}")
    mod = import_module(_NAMES[name])
    threads = os.environ.get("NDNET_THREADS")
    if threads:
        mod.set_num_threads(int(threads))
    return mod


def _select() -> tuple[str, ModuleType]:
    wanted = os.environ.get("NDNET_KERNELS", "").strip().lower()
    if wanted == "python":
        return "python", load("python")
    try:
        return "cython", load("cython")
    except ImportError:
        if wanted == "cython":
            raise
        return "python", load("python")


BACKEND, kernels = _select()


def use(name: str) -> None:
    """Swap the active kernel module at runtime (used by benchmarks and tests)."""
    global BACKEND, kernels
    kernels = load(name)
    BACKEND = name
