"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass
class GradcheckReport:
    max_rel_error: list[float]
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and all(e < self.tolerance for e in self.max_rel_error)

    def __bool__(self) -> bool:
        return self.passed

    def summary(self) -> str:
        errs = ", ".join(f"{e:.2e}" for e in self.max_rel_error)
        status = "pass" if self.passed else "FAIL"
        extra = f" ({'; '.join(self.failures)})" if self.failures else ""
        return f"gradcheck {status}: max rel err per input [{errs}] tol {self.tolerance:g}{extra}"


def _where(mask: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argwhere(mask)[0])


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def gradcheck(
    fn: Callable[..., np.ndarray],
    grad_fn: Callable[..., Sequence[np.ndarray]],
    inputs: Sequence[np.ndarray],
    tolerance: float = 1e-5,
    eps: float = 1e-6,
    seed: int = 0,
    max_probes: int | None = None,
) -> GradcheckReport:
    """Compare ``grad_fn`` against central differences of ``fn``.

    ``fn(*inputs)`` returns an array ``y``; ``grad_fn(g, *inputs)`` returns one
    gradient per input for the upstream gradient ``g``. The scalar probed is
    ``sum(r * y)`` for a fixed random ``r``, so every output contributes.
    All arithmetic happens in float64. Relative error is the max absolute
    deviation scaled by the larger of the two gradients' max magnitude.
    ``max_probes`` limits how many elements per input are differentiated.
    """
    rng = np.random.default_rng(seed)
    xs = [np.array(x, dtype=np.float64) for x in inputs]
    failures: list[str] = []

    y = np.asarray(fn(*xs), dtype=np.float64)
    if not np.all(np.isfinite(y)):
        return GradcheckReport([np.inf] * len(xs), tolerance, [f"non-finite output at {_where(~np.isfinite(y))}"])
    r = rng.standard_normal(y.shape)
    analytic = [np.asarray(g, dtype=np.float64) for g in grad_fn(r, *xs)]

    errors = []
    for k, (x, ga) in enumerate(zip(xs, analytic)):
        if ga.shape != x.shape:
            failures.append(f"input {k}: gradient shape {ga.shape} != {x.shape}")
            errors.append(np.inf)
            continue
        if not np.all(np.isfinite(ga)):
            failures.append(f"input {k}: non-finite analytic gradient at {_where(~np.isfinite(ga))}")
            errors.append(np.inf)
            continue
        flat_idx = np.arange(x.size)
        if max_probes is not None and x.size > max_probes:
            flat_idx = rng.choice(x.size, size=max_probes, replace=False)
        numeric = np.empty(len(flat_idx))
        xf = x.reshape(-1)
        for j, i in enumerate(flat_idx):
            old = xf[i]
            xf[i] = old + eps
            fp = float(np.sum(r * fn(*xs)))
            xf[i] = old - eps
            fm = float(np.sum(r * fn(*xs)))
            xf[i] = old
            numeric[j] = (fp - fm) / (2 * eps)
            if not np.isfinite(numeric[j]):
                failures.append(f"input {k}: non-finite finite difference at flat index {i}")
                break
        errors.append(_rel_error(ga.reshape(-1)[flat_idx], numeric))
    return GradcheckReport(errors, tolerance, failures)
