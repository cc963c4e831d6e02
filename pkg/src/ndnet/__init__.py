"""Narrow deep networks (NDNet) for real-time segmentation, built from scratch.

Subpackages: ``nn`` (tensor ops with backward passes), ``model`` (layer and
network builders), ``cost`` (closed-form and exact cost counting), ``train``
(SGD loop, metrics, benchmarking), ``data`` (datasets and checkpoints).
"""

import os as _os

# BLAS reads its thread count at import time, so cap it before numpy loads
if _os.environ.get("NDNET_THREADS"):
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["NDNET_THREADS"])

__version__ = "0.1.0"
