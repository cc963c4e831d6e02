"""Deterministic synthetic segmentation scenes.

Each scene is a textured background (class 0) with large coloured blobs, one
per foreground class, anchored near distinct image corners. Blobs are sized
so that their extent is comparable to the 32-pixel output stride of an FCN32
head; small free-floating blobs would be unresolvable at 1/32 resolution.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import DatasetManifest, write_manifest

# Base colours per class (class 0 is the background's mean tone)
_PALETTE = np.array(
    [
        [110, 110, 110],
        [220, 40, 40],
        [40, 180, 60],
        [50, 70, 220],
        [230, 200, 40],
        [200, 60, 200],
        [40, 200, 210],
        [240, 140, 30],
    ],
    dtype=np.float64,
)


def class_color(k: int) -> np.ndarray:
    if k < len(_PALETTE):
        return _PALETTE[k]
    # deterministic pseudo-random colour for classes beyond the palette
    return np.random.default_rng(1000 + k).uniform(30, 230, size=3)


def render_scene(h: int, w: int, num_classes: int, classes: list[int], rng: np.random.Generator):
    """Return (rgb uint8 (h, w, 3), label uint8 (h, w))."""
    yy, xx = np.mgrid[:h, :w].astype(np.float64)
    fx, fy, phase = rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0, 2 * np.pi)
    texture = 18 * np.sin(fx * xx + phase) * np.cos(fy * yy) + rng.normal(0, 10, (h, w))
    img = class_color(0)[None, None, :] + texture[..., None]
    label = np.zeros((h, w), dtype=np.uint8)
    corners = rng.permutation(4)
    scale = min(h, w)
    for cls, corner in zip(classes, corners):
        cy = (corner // 2) * (h - 1) + rng.uniform(-0.12, 0.12) * scale
        cx = (corner % 2) * (w - 1) + rng.uniform(-0.12, 0.12) * scale
        ry, rx = rng.uniform(0.47, 0.69, size=2) * scale
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        color = class_color(cls) + rng.normal(0, 12, size=3)
        img[mask] = color + rng.normal(0, 8, (int(mask.sum()), 3))
        label[mask] = cls
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), label


def scene_classes(index: int, num_classes: int) -> list[int]:
    """Foreground classes of scene ``index``; cycles so every class recurs."""
    fg = num_classes - 1
    per_scene = min(4, fg)
    return [((index * per_scene + j) % fg) + 1 for j in range(per_scene)]


def generate_synthetic_dataset(
    root: str | Path, n_samples: int = 200, h: int = 64, w: int = 64, num_classes: int = 3, seed: int = 0
) -> DatasetManifest:
    """Write ``root/images/*.png`` and ``root/labels/*.png`` plus ``manifest.json``.

    Output is byte-identical for equal arguments.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes (background plus one blob class)")
    if num_classes > 256:
        raise ValueError("labels are 8-bit; at most 256 classes")
    if n_samples < 1 or h < 1 or w < 1:
        raise ValueError("n_samples, h and w must be positive")
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pairs = []
    total = np.zeros(3)
    total_sq = np.zeros(3)
    for i in range(n_samples):
        rgb, label = render_scene(h, w, num_classes, scene_classes(i, num_classes), rng)
        name = f"scene_{i:05d}.png"
        Image.fromarray(rgb).save(root / "images" / name, optimize=False)
        Image.fromarray(label).save(root / "labels" / name, optimize=False)
        pairs.append((f"images/{name}", f"labels/{name}"))
        px = rgb.reshape(-1, 3) / 255.0
        total += px.sum(axis=0)
        total_sq += (px ** 2).sum(axis=0)
    count = n_samples * h * w
    mean = total / count
    std = np.sqrt(np.maximum(total_sq / count - mean ** 2, 1e-12))
    manifest = DatasetManifest(
        root=root,
        pairs=pairs,
        num_classes=num_classes,
        ignore_index=255,
        mean=tuple(round(float(m), 6) for m in mean),
        std=tuple(round(float(s), 6) for s in std),
    )
    write_manifest(manifest)
    return manifest
