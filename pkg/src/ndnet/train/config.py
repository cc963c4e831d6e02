from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class TrainConfig:
    """Optimizer, schedule, augmentation and BN settings for one training run.

    ``lr_milestones`` are fractions of ``total_steps``; the defaults put the
    two divide-by-10 drops at 35K and 60K of 80K steps.
    """

    base_lr: float = 0.1
    lr_milestones: tuple[float, ...] = (0.4375, 0.75)
    lr_decay: float = 10.0
    momentum: float = 0.9
    weight_decay: float = 1e-4
    total_steps: int = 80_000
    batch_size: int = 16
    crop: tuple[int, int] = (1024, 1024)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    scales: tuple[float, ...] = (0.75, 1.0, 1.25, 1.5, 2.0)
    mirror_prob: float = 0.5
    pad_if_needed: bool = True
    ignore_index: int = 255
    seed: int = 0

    def __post_init__(self):
        self.lr_milestones = tuple(float(m) for m in self.lr_milestones)
        self.scales = tuple(float(s) for s in self.scales)
        self.crop = (int(self.crop[0]), int(self.crop[1]))
        ms = self.lr_milestones
        if any(not 0 < m < 1 for m in ms) or any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing fractions in (0, 1), got {ms}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not self.scales or min(self.scales) <= 0:
            raise ValueError("scales must be a non-empty set of positive factors")
        if not 0 <= self.mirror_prob <= 1:
            raise ValueError("mirror_prob must lie in [0, 1]")
        if self.lr_decay <= 0:
            raise ValueError("lr_decay must be positive")

    def milestone_steps(self) -> list[int]:
        return [round(m * self.total_steps) for m in self.lr_milestones]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("lr_milestones", "scales", "crop"):
            d[k] = list(d[k])
        return d


def desk_config(**overrides) -> TrainConfig:
    """Settings sized for the synthetic 64x64 dataset on a CPU."""
    base = dict(total_steps=1000, batch_size=8, crop=(64, 64), scales=(1.0,), weight_decay=1e-4, seed=0)
    base.update(overrides)
    return TrainConfig(**base)
