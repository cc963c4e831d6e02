"""Step learning-rate schedule and SGD with momentum."""

from __future__ import annotations

from typing import Mapping, MutableMapping

import numpy as np

from .config import TrainConfig


class NonFiniteGradientError(FloatingPointError):
    pass


def lr_at_step(cfg: TrainConfig, step: int) -> float:
    """``base_lr`` divided by ``lr_decay`` once per milestone already reached."""
    if not 0 <= step < cfg.total_steps:
        raise ValueError(f"step {step} outside [0, {cfg.total_steps})")
    drops = sum(step >= m for m in cfg.milestone_steps())
    return cfg.base_lr / cfg.lr_decay ** drops


def sgd_momentum_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    velocity: MutableMapping[str, np.ndarray],
    cfg: TrainConfig,
    step: int,
    decay: Mapping[str, bool] | None = None,
    lr: float | None = None,
) -> tuple[Mapping[str, np.ndarray], MutableMapping[str, np.ndarray]]:
    """In-place update ``v = momentum * v + g + wd * w``, ``w -= lr * v``.

    Weight decay applies where ``decay[name]`` is true (conv weights); with no
    mask it applies everywhere. Nothing is modified if any gradient is
    non-finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {name} at step {step}; step rejected")
    lr = lr_at_step(cfg, step) if lr is None else lr
    for name, w in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if cfg.weight_decay and (decay is None or decay.get(name, False)):
            g = g + cfg.weight_decay * w
        v = velocity.get(name)
        v = g.astype(w.dtype, copy=True) if v is None else cfg.momentum * v + g
        velocity[name] = v.astype(w.dtype, copy=False)
        w -= (lr * velocity[name]).astype(w.dtype, copy=False)
    return params, velocity
