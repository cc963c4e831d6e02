"""Architecture descriptions: residual layer, block and whole-network specs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal


@dataclass(frozen=True)
class NarrowBottleneckSpec:
    """One narrow residual layer with outer width ``e * n_md``.

    ``in_channels`` defaults to the outer width. A stride of 2 or a different
    input width requires a projection shortcut.
    """

    n_md: int
    e: int = 4
    stride: int = 1
    shortcut: Literal["identity", "projection"] | None = None
    in_channels: int | None = None

    def __post_init__(self):
        if self.n_md < 1 or self.e < 1:
            raise ValueError(f"n_md and e must be >= 1, got n_md={self.n_md}, e={self.e}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.in_channels is None:
            object.__setattr__(self, "in_channels", self.width)
        needs_proj = self.stride == 2 or self.in_channels != self.width
        if self.shortcut is None:
            object.__setattr__(self, "shortcut", "projection" if needs_proj else "identity")
        elif self.shortcut == "identity" and needs_proj:
            raise ValueError(
                f"identity shortcut impossible with stride {self.stride} and "
                f"{self.in_channels} -> {self.width} channels"
            )
        elif self.shortcut not in ("identity", "projection"):
            raise ValueError(f"unknown shortcut {self.shortcut!r}")

    @property
    def width(self) -> int:
        return self.e * self.n_md


@dataclass(frozen=True)
class BlockSpec:
    d: int
    n_md: int
    e: int = 4
    downsample: bool = True

    def __post_init__(self):
        if self.d < 1 or self.n_md < 1:
            raise ValueError(f"block needs d >= 1 and n_md >= 1, got d={self.d}, n_md={self.n_md}")


@dataclass(frozen=True)
class NetworkSpec:
    channel_combination: tuple[int, int, int]
    depth_combination: tuple[int, int, int]
    e: int = 4
    stem_width: int = 32
    num_classes: int = 19
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "channel_combination", tuple(int(c) for c in self.channel_combination))
        object.__setattr__(self, "depth_combination", tuple(int(d) for d in self.depth_combination))
        if len(self.channel_combination) != 3 or len(self.depth_combination) != 3:
            raise ValueError("channel and depth combinations must each have three entries")
        if min(self.channel_combination) < 1:
            raise ValueError(f"widths must be positive, got {self.channel_combination}")
        if min(self.depth_combination) < 1:
            raise ValueError(f"depths must be positive, got {self.depth_combination}")
        if self.e < 1 or self.stem_width < 1 or self.num_classes < 1:
            raise ValueError("e, stem_width and num_classes must be positive")

    @property
    def nominal_depth(self) -> int:
        # conv1 plus one layer per separable conv, two per residual layer
        return 1 + 2 * sum(self.depth_combination)

    @property
    def blocks(self) -> list[BlockSpec]:
        return [BlockSpec(d, n, self.e) for n, d in zip(self.channel_combination, self.depth_combination)]

    @property
    def max_width(self) -> int:
        return self.e * max(self.channel_combination)

    def with_(self, **changes) -> "NetworkSpec":
        data = asdict(self)
        data.update(changes)
        return NetworkSpec(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_combination"] = list(self.channel_combination)
        d["depth_combination"] = list(self.depth_combination)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        known = {"channel_combination", "depth_combination", "e", "stem_width", "num_classes", "name"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown architecture fields: {sorted(unknown)}")
        missing = {"channel_combination", "depth_combination"} - set(data)
        if missing:
            raise ValueError(f"architecture file missing fields: {sorted(missing)}")
        return cls(**data)


PRESETS: dict[str, NetworkSpec] = {
    "ndnet29": NetworkSpec((24, 48, 96), (3, 8, 3), name="ndnet29"),
    "ndnet45": NetworkSpec((16, 32, 64), (4, 12, 6), name="ndnet45"),
    "ndnet61": NetworkSpec((12, 24, 48), (6, 16, 8), name="ndnet61"),
    "ndnet29-wide": NetworkSpec((64, 128, 256), (3, 8, 3), name="ndnet29-wide"),
    # desk-scale network for CPU training on small synthetic scenes
    "toy": NetworkSpec((8, 16, 32), (1, 2, 1), num_classes=3, name="toy"),
}


def save_arch(spec: NetworkSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


def load_arch(path: str | Path) -> NetworkSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object")
    return NetworkSpec.from_dict(data)


def resolve_arch(arch: str, **overrides) -> NetworkSpec:
    """Preset name or path to an architecture JSON file, with field overrides."""
    key = arch.lower()
    if key in PRESETS:
        spec = PRESETS[key]
    elif Path(arch).is_file():
        spec = load_arch(arch)
    else:
        raise ValueError(f"unknown architecture {arch!r}: not a preset ({', '.join(PRESETS)}) or a file")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return spec.with_(**overrides) if overrides else spec
