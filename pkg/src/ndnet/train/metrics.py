"""Confusion matrix accumulation and intersection-over-union."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class ConfusionMatrix:
    """K x K pixel counts; rows are ground truth, columns predictions."""

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        self.num_classes = num_classes
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (num_classes, num_classes) or (self.counts < 0).any():
            raise ValueError("counts must be a non-negative K x K array")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, pred, gt, ignore_index: int = 255) -> "ConfusionMatrix":
        pred, gt = np.asarray(pred), np.asarray(gt)
        if pred.shape != gt.shape:
            raise ValueError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
        keep = gt != ignore_index
        g, p = gt[keep].astype(np.int64), pred[keep].astype(np.int64)
        k = self.num_classes
        for name, arr in (("ground truth", g), ("prediction", p)):
            bad = (arr < 0) | (arr >= k)
            if bad.any():
                raise ValueError(f"{name} labels {np.unique(arr[bad]).tolist()} outside [0, {k - 1}]")
        self.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge confusion matrices with different class counts")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)


def update_confusion(cm: ConfusionMatrix, pred, gt, ignore_index: int = 255) -> ConfusionMatrix:
    return cm.update(pred, gt, ignore_index)


@dataclass
class IoUResult:
    per_class: list[float | None]  # None where the class is absent from both maps
    mean: float
    exact_mean: Fraction | None = None

    def table(self, names: list[str] | None = None) -> str:
        names = names or [f"class {k}" for k in range(len(self.per_class))]
        width = max(len(n) for n in names + ["mIoU"])
        lines = [f"{n:<{width}}  {'-' if v is None else f'{v:.4f}'}" for n, v in zip(names, self.per_class)]
        lines.append(f"{'mIoU':<{width}}  {self.mean:.4f}")
        return "\n".join(lines)


def miou(cm: ConfusionMatrix) -> IoUResult:
    """IoU_k = tp / (row_k + col_k - tp); classes with zero denominator skipped.

    The mean is computed exactly in rational arithmetic, then rounded once.
    """
    c = cm.counts
    tp = np.diag(c)
    denom = c.sum(axis=0) + c.sum(axis=1) - tp
    per_class: list[float | None] = []
    exact = []
    for t, d in zip(tp.tolist(), denom.tolist()):
        if d == 0:
            per_class.append(None)
        else:
            per_class.append(t / d)
            exact.append(Fraction(t, d))
    if not exact:
        raise ValueError("no class has a non-zero IoU denominator; mIoU is undefined")
    mean = sum(exact, Fraction(0)) / len(exact)
    return IoUResult(per_class, float(mean), mean)
