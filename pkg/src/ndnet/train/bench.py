"""Wall-clock eval-mode throughput."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from ..model.builder import LayerGraph


@dataclass
class BenchReport:
    latencies_ms: list[float]
    mean_fps: float
    cv: float
    input_shape: tuple[int, int, int, int]
    warmup: int
    backend: str = ""

    @property
    def mean_latency_ms(self) -> float:
        return float(np.mean(self.latencies_ms))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["mean_latency_ms"] = self.mean_latency_ms
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        rows = ["run,latency_ms"] + [f"{i},{t!r}" for i, t in enumerate(self.latencies_ms)]
        return "\n".join(rows) + "\n"

    def to_text(self) -> str:
        shape = "x".join(map(str, self.input_shape))
        return (f"input {shape}  runs {len(self.latencies_ms)}  warmup {self.warmup}  backend {self.backend}\n"
                f"mean latency {self.mean_latency_ms:.2f} ms  FPS {self.mean_fps:.2f}  CV {self.cv:.3f}")


def summarize(latencies_ms: list[float], input_shape, warmup: int, backend: str = "") -> BenchReport:
    """FPS = 1000 / mean latency; CV = population std / mean of the latencies."""
    lat = np.asarray(latencies_ms, dtype=np.float64)
    mean = float(lat.mean())
    cv = float(lat.std() / mean) if mean > 0 else 0.0
    fps = 1000.0 / mean if mean > 0 else float("inf")
    return BenchReport(list(map(float, lat)), fps, cv, tuple(input_shape), warmup, backend)


def benchmark_fps(
    graph: LayerGraph,
    input_shape=(1, 3, 1024, 2048),
    runs: int = 10,
    warmup: int = 1,
    clock: Callable[[], float] = time.perf_counter,
    seed: int = 0,
) -> BenchReport:
    """Time ``runs`` eval-mode forwards after ``warmup`` untimed ones.

    ``clock`` returns seconds and is read once before and once after each run.
    """
    from ..nn import _backend

    if runs < 3:
        raise ValueError("need at least 3 timed runs")
    if warmup < 1:
        raise ValueError("need at least 1 warmup run")
    x = np.random.default_rng(seed).standard_normal(input_shape).astype(np.float32)
    for _ in range(warmup):
        graph.forward(x, "eval")
    lat = []
    for _ in range(runs):
        t0 = clock()
        graph.forward(x, "eval")
        lat.append((clock() - t0) * 1000.0)
    return summarize(lat, input_shape, warmup, _backend.BACKEND)
