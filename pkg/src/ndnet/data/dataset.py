"""Directory datasets: ``root/images/**.png`` paired with ``root/labels/**.png``.

Images are 8-bit RGB, labels 8-bit single channel. An optional
``manifest.json`` in the root records class count, ignore index and the
per-channel normalization constants; an optional two-column CSV remaps raw
label ids to training ids.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

MANIFEST_NAME = "manifest.json"


class DatasetError(ValueError):
    """Base class for dataset ingestion failures."""


class UnmatchedPairError(DatasetError):
    pass


class DecodeError(DatasetError):
    pass


class RemapError(DatasetError):
    pass


@dataclass
class Sample:
    image: np.ndarray  # (1, 3, h, w) float32, standardized
    label: np.ndarray  # (h, w) int64, train ids or ignore_index

    def __post_init__(self):
        if self.image.ndim != 4 or self.image.shape[:2] != (1, 3):
            raise ValueError(f"sample image must be (1, 3, h, w), got {self.image.shape}")
        if self.label.shape != self.image.shape[2:]:
            raise ValueError(f"label shape {self.label.shape} != image spatial shape {self.image.shape[2:]}")


@dataclass
class DatasetManifest:
    root: Path
    pairs: list[tuple[str, str]]
    num_classes: int
    ignore_index: int = 255
    remap: dict[int, int] | None = None
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.25, 0.25, 0.25)
    _lut: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.root = Path(self.root)
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.remap is not None:
            lut = np.full(256, -1, dtype=np.int64)
            for raw, train in self.remap.items():
                if not (0 <= raw < 256):
                    raise RemapError(f"remap raw id {raw} is not an 8-bit label value")
                if not (0 <= train < self.num_classes or train == self.ignore_index):
                    raise RemapError(
                        f"remap sends {raw} to {train}, outside [0, {self.num_classes - 1}] "
                        f"and not ignore_index {self.ignore_index}"
                    )
                lut[raw] = train
            self._lut = lut

    def __len__(self) -> int:
        return len(self.pairs)

    def decode_label(self, path: Path) -> np.ndarray:
        raw = _decode(path, "L")
        if self._lut is not None:
            out = self._lut[raw]
            if (out < 0).any():
                missing = sorted(set(np.unique(raw[out < 0]).tolist()))
                raise RemapError(f"{path}: label ids {missing} have no entry in the remap table")
        else:
            out = raw.astype(np.int64)
        bad = (out != self.ignore_index) & ((out < 0) | (out >= self.num_classes))
        if bad.any():
            raise RemapError(
                f"{path}: label values {sorted(set(np.unique(out[bad]).tolist()))} outside "
                f"[0, {self.num_classes - 1}] and not ignore_index {self.ignore_index}"
            )
        return out

    def decode_image(self, path: Path) -> np.ndarray:
        rgb = _decode(path, "RGB").astype(np.float32) / 255.0
        mean = np.asarray(self.mean, dtype=np.float32)
        std = np.asarray(self.std, dtype=np.float32)
        return ((rgb - mean) / std).transpose(2, 0, 1)[None].copy()

    def load(self, i: int) -> Sample:
        img_rel, lab_rel = self.pairs[i]
        image = self.decode_image(self.root / img_rel)
        label = self.decode_label(self.root / lab_rel)
        if image.shape[2:] != label.shape:
            raise DatasetError(f"{img_rel}: image {image.shape[2:]} and label {label.shape} sizes differ")
        return Sample(image, label)

    def samples(self) -> list[Sample]:
        return [self.load(i) for i in range(len(self))]

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "num_classes": self.num_classes,
            "ignore_index": self.ignore_index,
            "mean": list(self.mean),
            "std": list(self.std),
        }


def _decode(path: Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if mode == "L" and im.mode not in ("L", "P"):
                raise DecodeError(f"{path}: label must be 8-bit single channel, got mode {im.mode}")
            if mode == "RGB" and im.mode not in ("RGB", "RGBA", "L", "P"):
                raise DecodeError(f"{path}: cannot read image mode {im.mode} as RGB")
            arr = np.asarray(im.convert(mode) if im.mode != mode and mode == "RGB" else im)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: cannot decode ({exc})") from exc
    return arr.astype(np.uint8, copy=False)


def write_manifest(manifest: DatasetManifest) -> Path:
    path = manifest.root / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return path


def load_remap_csv(path: str | Path) -> dict[int, int]:
    """Read ``raw_id,train_id`` rows; a non-numeric first row is a header."""
    table: dict[int, int] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if len(row) != 2:
                raise RemapError(f"{path}:{lineno}: expected two columns, got {len(row)}")
            try:
                raw, train = int(row[0]), int(row[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise RemapError(f"{path}:{lineno}: non-integer entry {row}") from None
            if raw in table:
                raise RemapError(f"{path}:{lineno}: raw id {raw} mapped twice")
            table[raw] = train
    return table


def load_dataset_dir(
    root: str | Path,
    remap: dict[int, int] | str | Path | None = None,
    num_classes: int | None = None,
    ignore_index: int | None = None,
    validate: bool = True,
) -> DatasetManifest:
    """Pair images with labels by relative path and build a manifest.

    Settings come from ``root/manifest.json`` when present; explicit
    arguments override it. With ``validate`` every pair is decoded once, so
    unreadable files and unmapped label ids surface here rather than during
    training. An empty remap table means labels are already training ids.
    """
    root = Path(root)
    img_dir, lab_dir = root / "images", root / "labels"
    for d in (img_dir, lab_dir):
        if not d.is_dir():
            raise DatasetError(f"{root}: missing {d.name}/ directory")
    meta = {}
    if (root / MANIFEST_NAME).is_file():
        meta = json.loads((root / MANIFEST_NAME).read_text())
    if isinstance(remap, (str, Path)):
        remap = load_remap_csv(remap)
    if remap is not None and len(remap) == 0:
        remap = None

    images = {p.relative_to(img_dir).as_posix() for p in img_dir.rglob("*.png")}
    labels = {p.relative_to(lab_dir).as_posix() for p in lab_dir.rglob("*.png")}
    only_img, only_lab = sorted(images - labels), sorted(labels - images)
    if only_img or only_lab:
        parts = []
        if only_img:
            parts.append(f"{len(only_img)} image(s) without label, e.g. {only_img[0]}")
        if only_lab:
            parts.append(f"{len(only_lab)} label(s) without image, e.g. {only_lab[0]}")
        raise UnmatchedPairError(f"{root}: " + "; ".join(parts))
    if not images:
        raise DatasetError(f"{root}: no PNG files under images/")
    pairs = [(f"images/{name}", f"labels/{name}") for name in sorted(images)]

    k = num_classes if num_classes is not None else meta.get("num_classes")
    if k is None:
        raise DatasetError(f"{root}: class count unknown; pass num_classes or add {MANIFEST_NAME}")
    manifest = DatasetManifest(
        root=root,
        pairs=pairs,
        num_classes=int(k),
        ignore_index=int(ignore_index if ignore_index is not None else meta.get("ignore_index", 255)),
        remap=remap,
        mean=tuple(meta.get("mean", (0.5, 0.5, 0.5))),
        std=tuple(meta.get("std", (0.25, 0.25, 0.25))),
    )
    if validate:
        for i in range(len(manifest)):
            manifest.load(i)
    return manifest
