"""Random mirror, random rescale and random crop for (image, label) pairs."""

from __future__ import annotations

import numpy as np

from .config import TrainConfig


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) linear interpolation weights with half-pixel centres."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    lam = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - lam)
    np.add.at(m, (rows, i1), lam)
    return m


def nearest_index(n_in: int, n_out: int) -> np.ndarray:
    return np.minimum(np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.int64), n_in - 1)


def rescale(image: np.ndarray, label: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear for the (c, h, w) image, nearest neighbour for the label."""
    h, w = label.shape
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    if (nh, nw) == (h, w):
        return image, label
    ah = resize_matrix(h, nh).astype(image.dtype)
    aw = resize_matrix(w, nw).astype(image.dtype)
    img = ah @ image @ aw.T
    lab = label[nearest_index(h, nh)][:, nearest_index(w, nw)]
    return img, lab


def augment_sample(image, label, cfg: TrainConfig, rng: np.random.Generator, fill=None):
    """Mirror, rescale, then crop to ``cfg.crop``.

    ``image`` is (c, h, w) or (1, c, h, w); ``label`` is (h, w). Short sides
    are padded with ``fill`` (per-channel image value, default 0 which is the
    standardized mean) and ``cfg.ignore_index`` in the label.
    """
    batched = image.ndim == 4
    img = image[0] if batched else image
    if img.shape[1:] != label.shape:
        raise ValueError(f"image {img.shape[1:]} and label {label.shape} are not aligned")
    if rng.random() < cfg.mirror_prob:
        img, label = img[:, :, ::-1], label[:, ::-1]
    scale = float(rng.choice(cfg.scales))
    img, label = rescale(img, label, scale)

    ch, cw = cfg.crop
    h, w = label.shape
    if (h < ch or w < cw) and not cfg.pad_if_needed:
        raise ValueError(f"crop {cfg.crop} larger than sample {h}x{w} and padding disabled")
    ph, pw = max(0, ch - h), max(0, cw - w)
    if ph or pw:
        fillv = np.zeros(img.shape[0], img.dtype) if fill is None else np.asarray(fill, img.dtype)
        padded = np.empty((img.shape[0], h + ph, w + pw), img.dtype)
        padded[...] = fillv[:, None, None]
        padded[:, :h, :w] = img
        plab = np.full((h + ph, w + pw), cfg.ignore_index, dtype=label.dtype)
        plab[:h, :w] = label
        img, label, h, w = padded, plab, h + ph, w + pw
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    img = np.ascontiguousarray(img[:, y0:y0 + ch, x0:x0 + cw])
    label = np.ascontiguousarray(label[y0:y0 + ch, x0:x0 + cw])
    return (img[None] if batched else img), label
