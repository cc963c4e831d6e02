from .augment import augment_sample
from .bench import BenchReport, benchmark_fps
from .config import TrainConfig, desk_config
from .loop import DivergedError, TrainResult, evaluate, predict, train
from .metrics import ConfusionMatrix, IoUResult, miou, update_confusion
from .optim import NonFiniteGradientError, lr_at_step, sgd_momentum_step

__all__ = [
    "BenchReport",
    "ConfusionMatrix",
    "DivergedError",
    "IoUResult",
    "NonFiniteGradientError",
    "TrainConfig",
    "TrainResult",
    "augment_sample",
    "benchmark_fps",
    "desk_config",
    "evaluate",
    "lr_at_step",
    "miou",
    "predict",
    "sgd_momentum_step",
    "train",
    "update_confusion",
]
