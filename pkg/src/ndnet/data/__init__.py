from .checkpoint import (
    CheckpointError,
    CheckpointVersionError,
    MissingTensorError,
    TrainState,
    TruncatedCheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from .dataset import (
    DatasetError,
    DatasetManifest,
    DecodeError,
    RemapError,
    Sample,
    UnmatchedPairError,
    load_dataset_dir,
    load_remap_csv,
)
from .synthetic import generate_synthetic_dataset

__all__ = [
    "CheckpointError",
    "CheckpointVersionError",
    "DatasetError",
    "DatasetManifest",
    "DecodeError",
    "MissingTensorError",
    "RemapError",
    "Sample",
    "TrainState",
    "TruncatedCheckpointError",
    "UnmatchedPairError",
    "generate_synthetic_dataset",
    "load_checkpoint",
    "load_dataset_dir",
    "load_remap_csv",
    "save_checkpoint",
]
