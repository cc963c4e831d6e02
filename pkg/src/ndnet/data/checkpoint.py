"""``.ndn`` checkpoint container.

Layout::

    b"NDNCKPT\\0"            8-byte magic
    uint64 little-endian     header length in bytes
    header                   UTF-8 JSON: version, network spec, tensor directory
    blobs                    little-endian float32 tensors at the listed offsets

Offsets are relative to the start of the blob region.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model.builder import LayerGraph, attach_fcn32_head, build_ndnet
from ..model.specs import NetworkSpec

MAGIC = b"NDNCKPT\0"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class MissingTensorError(CheckpointError):
    pass


@dataclass
class TrainState:
    step: int = 0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def _bn_settings(graph: LayerGraph) -> tuple[float, float]:
    for _, bn in graph.batchnorms():
        return bn.state.eps, bn.state.momentum
    return 1e-5, 0.1


def _collect(graph: LayerGraph, state: TrainState | None) -> dict[str, np.ndarray]:
    tensors = dict(graph.state_tensors())
    if state is not None:
        for name, v in state.velocity.items():
            tensors[f"velocity/{name}"] = v
    return tensors


def save_checkpoint(graph: LayerGraph, path: str | Path, state: TrainState | None = None) -> Path:
    path = Path(path)
    tensors = _collect(graph, state)
    directory = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        directory.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    eps, momentum = _bn_settings(graph)
    header = {
        "format_version": FORMAT_VERSION,
        "network": graph.spec.to_dict(),
        "has_head": graph.has_head,
        "bn_eps": eps,
        "bn_momentum": momentum,
        "step": 0 if state is None else int(state.step),
        "blob_bytes": offset,
        "tensors": directory,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)
    return path


def read_header(path: str | Path) -> tuple[dict, int]:
    """Return (header, byte offset of the blob region)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if len(magic) < len(MAGIC):
            raise TruncatedCheckpointError(f"{path}: file too short for a checkpoint header")
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not an .ndn checkpoint (bad magic)")
        size = fh.read(8)
        if len(size) < 8:
            raise TruncatedCheckpointError(f"{path}: truncated header length")
        (n,) = struct.unpack("<Q", size)
        raw = fh.read(n)
        if len(raw) < n:
            raise TruncatedCheckpointError(f"{path}: header truncated ({len(raw)} of {n} bytes)")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
    return header, len(MAGIC) + 8 + n


def load_checkpoint(path: str | Path) -> tuple[LayerGraph, TrainState]:
    path = Path(path)
    header, start = read_header(path)
    data = path.read_bytes()[start:]
    if len(data) < header["blob_bytes"]:
        raise TruncatedCheckpointError(
            f"{path}: tensor data truncated ({len(data)} of {header['blob_bytes']} bytes)"
        )
    tensors = {}
    for entry in header["tensors"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(data):
            raise TruncatedCheckpointError(f"{path}: tensor {entry['name']} extends past end of file")
        tensors[entry["name"]] = np.frombuffer(data[lo:hi], dtype=_DTYPE).reshape(entry["shape"])

    spec = NetworkSpec.from_dict(header["network"])
    bn = {"bn_eps": header["bn_eps"], "bn_momentum": header["bn_momentum"]}
    graph = build_ndnet(spec, **bn)
    if header["has_head"]:
        graph = attach_fcn32_head(graph, spec.num_classes, **bn)

    for name, t in graph.named_parameters():
        if name not in tensors:
            raise MissingTensorError(f"{path}: missing tensor {name}")
        if tensors[name].shape != t.shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {tensors[name].shape}, expected {t.shape}")
        t.data[...] = tensors[name]
    for name, mod in graph.batchnorms():
        mean, var = tensors.get(f"{name}.running_mean"), tensors.get(f"{name}.running_var")
        if (mean is None) != (var is None):
            raise MissingTensorError(f"{path}: running statistics of {name} are incomplete")
        if mean is not None:
            mod.state.running_mean = mean.astype(np.float32)
            mod.state.running_var = var.astype(np.float32)
    velocity = {
        name[len("velocity/"):]: arr.astype(np.float32)
        for name, arr in tensors.items()
        if name.startswith("velocity/")
    }
    return graph, TrainState(step=int(header["step"]), velocity=velocity)
