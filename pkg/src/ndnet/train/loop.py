"""Training loop and dataset evaluation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data.dataset import Sample
from ..model.builder import LayerGraph
from ..nn.functional import softmax_cross_entropy
from .augment import augment_sample
from .config import TrainConfig
from .metrics import ConfusionMatrix, IoUResult, miou
from .optim import lr_at_step, sgd_momentum_step

log = logging.getLogger(__name__)


class DivergedError(FloatingPointError):
    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainResult:
    graph: LayerGraph
    losses: list[float]
    lrs: list[float]
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @property
    def final_loss(self) -> float:
        """Mean of the last 10 step losses; single minibatch losses are noisy."""
        return float(np.mean(self.losses[-10:]))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "lr", "loss"])
            for i, (lr, loss) in enumerate(zip(self.lrs, self.losses)):
                w.writerow([i, repr(lr), repr(loss)])


def _batch(dataset: Sequence[Sample], idx, cfg: TrainConfig, rng):
    images, labels = [], []
    for i in idx:
        s = dataset[int(i)]
        img, lab = augment_sample(s.image, s.label, cfg, rng)
        images.append(img)
        labels.append(lab)
    return np.concatenate(images).astype(np.float32, copy=False), np.stack(labels)


def train(
    graph: LayerGraph,
    dataset: Sequence[Sample],
    cfg: TrainConfig,
    velocity: dict[str, np.ndarray] | None = None,
    log_every: int = 0,
) -> TrainResult:
    """``cfg.total_steps`` iterations of sample, augment, forward, loss, backward, SGD.

    Batches are drawn with replacement from a generator seeded by
    ``cfg.seed``, so the loss trace is reproducible for a fixed seed.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    for _, bn in graph.batchnorms():
        bn.state.momentum = cfg.bn_momentum
        bn.state.eps = cfg.bn_eps
    rng = np.random.default_rng(cfg.seed)
    params = dict(graph.named_parameters())
    decay = {name: name.endswith(".weight") for name in params}
    velocity = {} if velocity is None else velocity
    losses: list[float] = []
    lrs: list[float] = []
    for step in range(cfg.total_steps):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        x, y = _batch(dataset, idx, cfg, rng)
        graph.zero_grad()
        logits = graph.forward(x, "train")
        loss, g = softmax_cross_entropy(logits, y, cfg.ignore_index)
        if not np.isfinite(loss):
            raise DivergedError(f"loss became non-finite at step {step}", losses + [loss])
        graph.backward(g)
        lr = lr_at_step(cfg, step)
        sgd_momentum_step(
            {n: t.data for n, t in params.items()},
            {n: t.grad for n, t in params.items() if t.grad is not None},
            velocity, cfg, step, decay, lr=lr,
        )
        losses.append(loss)
        lrs.append(lr)
        if log_every and (step % log_every == 0 or step == cfg.total_steps - 1):
            log.info("step %d lr %.4g loss %.4f", step, lr, loss)
    return TrainResult(graph, losses, lrs, velocity, cfg.total_steps)


def predict(graph: LayerGraph, image: np.ndarray) -> np.ndarray:
    """Eval-mode argmax label map(s) for a (n, 3, h, w) batch."""
    return graph.forward(image, "eval").argmax(axis=1)


def evaluate(
    graph: LayerGraph, dataset: Sequence[Sample], num_classes: int, ignore_index: int = 255, batch_size: int = 16
) -> tuple[ConfusionMatrix, IoUResult]:
    cm = ConfusionMatrix(num_classes)
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        x = np.concatenate([s.image for s in chunk])
        pred = predict(graph, x)
        for p, s in zip(pred, chunk):
            cm.update(p, s.label, ignore_index)
    return cm, miou(cm)
