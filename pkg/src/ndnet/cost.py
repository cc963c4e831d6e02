"""Closed-form convolution cost formulas and an exact graph-walk counter.

All counts are Python ints (arbitrary precision). One Multi-add is one fused
multiply-accumulate; only convolutions contribute.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Literal

from .model.builder import LayerGraph
from .nn.layers import BatchNorm2d, Conv2d, Residual, Sequential

# Published backbone sizes and FPS (Titan X, FCN32, 1024x2048) for comparison
REPORTED_PARAMS = {
    "ndnet29": 515_000,
    "ndnet45": 386_000,
    "ndnet61": 292_000,
    "ndnet29-wide": 3_505_000,
}
REPORTED_FPS = {"ndnet29": 55.23, "ndnet45": 54.34, "ndnet61": 52.36, "ndnet29-wide": 28.23}

MIN_DEPTH = 25
MIN_FPS = 50.0


@dataclass(frozen=True)
class CostQuery:
    k: int = 3
    H: int = 1
    W: int = 1
    M: int = 1
    N: int = 1
    e: int = 4
    n_md: int = 1
    d: int = 1

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"CostQuery.{name} must be a positive integer, got {v!r}")


def multiadds_standard(q: CostQuery) -> int:
    return q.k * q.k * q.H * q.W * q.M * q.N


def multiadds_separable(q: CostQuery) -> int:
    """Depthwise k x k on M channels plus a 1x1 from M to N."""
    return q.k * q.k * q.H * q.W * q.M + q.H * q.W * q.M * q.N


def separable_ratio(k: int, N: int) -> Fraction:
    """Standard over separable cost, k^2 N / (k^2 + N); independent of H, W, M."""
    if k < 1 or N < 1:
        raise ValueError("k and N must be >= 1")
    return Fraction(k * k * N, k * k + N)


def asymmetric_ratio(k: int = 3) -> Fraction:
    """k x k cost over (k x 1 + 1 x k) cost at equal channel counts."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Fraction(k * k, 2 * k) if k > 1 else Fraction(1)


def multiadds_asymmetric(q: CostQuery) -> int:
    """k x 1 (M -> N) followed by 1 x k (N -> N); ``2k H W M N`` when M == N."""
    return q.k * q.H * q.W * q.M * q.N + q.k * q.H * q.W * q.N * q.N


ClosedForm = Literal["bottleneck", "standard_block", "narrow_layer", "narrow_block"]


def params_closed(form: ClosedForm, q: CostQuery) -> int:
    """Weight counts of the residual-layer families.

    bottleneck: 1x1-3x3-1x1 bottleneck with e = 4, 17 n^2
    standard_block: three 3x3 convs at width 4 n, 432 n^2
    narrow_layer: one narrow layer, 9en + en^2 + 9n + en^2
    narrow_block: d narrow layers, d (2en^2 + (9e + 9) n)
    """
    n, e, d = q.n_md, q.e, q.d
    if form == "bottleneck":
        return 4 * n * n + 9 * n * n + 4 * n * n
    if form == "standard_block":
        return 3 * 9 * (4 * n) ** 2
    if form == "narrow_layer":
        return 9 * e * n + e * n * n + 9 * n + e * n * n
    if form == "narrow_block":
        return d * (2 * e * n * n + (9 * e + 9) * n)
    raise ValueError(f"unknown closed form {form!r}")


def multiadds_narrow_block(q: CostQuery) -> int:
    """d (2en^2 + (9e + 9) n) H W with H, W the block's operating resolution."""
    return params_closed("narrow_block", q) * q.H * q.W


# ------------------------------------------------------------ graph walk


@dataclass
class CostRow:
    name: str
    kind: str
    role: str
    params: int
    multi_adds: int
    output_shape: tuple[int, ...]


@dataclass
class BlockCheck:
    block: str
    d: int
    n_md: int
    e: int
    H: int
    W: int
    params: int
    params_closed: int
    multi_adds: int
    multi_adds_closed: int

    @property
    def params_delta(self) -> int:
        return self.params - self.params_closed

    @property
    def multi_adds_delta(self) -> int:
        return self.multi_adds - self.multi_adds_closed


@dataclass
class CostReport:
    arch: str
    probe_shape: tuple[int, int, int, int]
    rows: list[CostRow]
    blocks: list[BlockCheck]
    bn_params: int
    nominal_depth: int
    reported_params: int | None = None
    extra: dict = field(default_factory=dict)

    def _sum(self, attr: str, roles: tuple[str, ...]) -> int:
        return sum(getattr(r, attr) for r in self.rows if r.role in roles)

    @property
    def backbone_params(self) -> int:
        """Conv weights of stem, residual blocks and projection shortcuts."""
        return self._sum("params", ("stem", "block", "projection"))

    @property
    def block_params(self) -> int:
        return self._sum("params", ("block",))

    @property
    def projection_params(self) -> int:
        return self._sum("params", ("projection",))

    @property
    def stem_params(self) -> int:
        return self._sum("params", ("stem",))

    @property
    def head_params(self) -> int:
        return self._sum("params", ("head",))

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def backbone_multi_adds(self) -> int:
        return self._sum("multi_adds", ("stem", "block", "projection"))

    @property
    def total_multi_adds(self) -> int:
        return sum(r.multi_adds for r in self.rows)

    @property
    def reported_delta(self) -> float | None:
        if self.reported_params is None:
            return None
        return (self.backbone_params - self.reported_params) / self.reported_params

    def totals(self) -> dict:
        out = {
            "backbone_params": self.backbone_params,
            "stem_params": self.stem_params,
            "block_params": self.block_params,
            "projection_params": self.projection_params,
            "head_params": self.head_params,
            "bn_params": self.bn_params,
            "conv_params": self.total_params,
            "backbone_multi_adds": self.backbone_multi_adds,
            "multi_adds": self.total_multi_adds,
            "nominal_depth": self.nominal_depth,
        }
        if self.reported_params is not None:
            out["reported_params"] = self.reported_params
            out["reported_rel_delta"] = self.reported_delta
        return out

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "probe_shape": list(self.probe_shape),
            "rows": [dict(asdict(r), output_shape=list(r.output_shape)) for r in self.rows],
            "blocks": [
                dict(asdict(b), params_delta=b.params_delta, multi_adds_delta=b.multi_adds_delta)
                for b in self.blocks
            ],
            "totals": self.totals(),
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "kind", "role", "params", "multi_adds", "output_shape"])
        for r in self.rows:
            w.writerow([r.name, r.kind, r.role, r.params, r.multi_adds, "x".join(map(str, r.output_shape))])
        return buf.getvalue()

    def to_text(self, layers: bool = False) -> str:
        lines = [f"arch {self.arch}  probe {'x'.join(map(str, self.probe_shape))}  "
                 f"nominal depth {self.nominal_depth}"]
        if layers:
            width = max(len(r.name) for r in self.rows)
            lines.append(f"{'layer':<{width}}  {'kind':<9} {'role':<10} {'params':>10} {'multi_adds':>16}  output")
            for r in self.rows:
                lines.append(
                    f"{r.name:<{width}}  {r.kind:<9} {r.role:<10} {r.params:>10,} {r.multi_adds:>16,}  "
                    f"{'x'.join(map(str, r.output_shape))}"
                )
            lines.append("")
        lines.append(f"{'block':<8} {'d':>3} {'n_md':>5} {'HxW':>9} {'params':>10} {'closed':>10} {'delta':>6}"
                     f" {'multi_adds':>16} {'closed':>16} {'delta':>6}")
        for b in self.blocks:
            lines.append(
                f"{b.block:<8} {b.d:>3} {b.n_md:>5} {f'{b.H}x{b.W}':>9} {b.params:>10,} {b.params_closed:>10,} "
                f"{b.params_delta:>6} {b.multi_adds:>16,} {b.multi_adds_closed:>16,} {b.multi_adds_delta:>6}"
            )
        lines.append("")
        for key, value in self.totals().items():
            if isinstance(value, float):
                lines.append(f"{key:<20} {value:+.2%}")
            else:
                lines.append(f"{key:<20} {value:,}")
        return "\n".join(lines)


def _conv_kind(conv: Conv2d) -> str:
    s = conv.spec
    if s.depthwise:
        return f"dw{s.kernel[0]}x{s.kernel[1]}"
    return f"conv{s.kernel[0]}x{s.kernel[1]}"


def _walk(module, prefix, shape, role, rows, bn_count):
    """Propagate ``shape`` through ``module``, appending conv rows."""
    if isinstance(module, Conv2d):
        out = module.output_shape(shape)
        rows.append(CostRow(prefix, _conv_kind(module), role, module.weight.size,
                            module.multi_adds(shape), out))
        return out
    if isinstance(module, BatchNorm2d):
        bn_count[0] += 2 * module.channels
        return module.output_shape(shape)
    if isinstance(module, Sequential):
        for name, child in module.layers:
            shape = _walk(child, f"{prefix}.{name}" if prefix else name, shape, role, rows, bn_count)
        return shape
    if isinstance(module, Residual):
        s = shape
        if module.projection is not None:
            proj_role = "projection" if role == "block" else role
            s = _walk(module.projection, f"{prefix}.proj", shape, proj_role, rows, bn_count)
        out = _walk(module.main, f"{prefix}.main", s, role, rows, bn_count)
        if out != s:
            raise ValueError(f"{prefix}: residual add mismatch {out} vs {s}")
        return out
    return module.output_shape(shape)


def count_exact(graph: LayerGraph, probe_shape=(1, 3, 1024, 2048)) -> CostReport:
    """Walk the graph at ``probe_shape`` and count conv weights and Multi-adds.

    BN affine parameters are tallied separately. Each residual block's
    main-path totals are cross-checked against the closed forms for
    parameters and Multi-adds at the block's output resolution.
    """
    probe_shape = tuple(int(s) for s in probe_shape)
    if len(probe_shape) != 4:
        raise ValueError(f"probe shape must be (n, c, h, w), got {probe_shape}")
    try:
        if probe_shape[1] != 3:
            raise ValueError("probe must have 3 input channels")
        rows: list[CostRow] = []
        bn = [0]
        blocks: list[BlockCheck] = []
        shape = probe_shape
        spec_blocks = iter(graph.spec.blocks)
        for name, stage in graph.root.layers:
            role = graph.roles.get(name, "block")
            start = len(rows)
            shape = _walk(stage, name, shape, role, rows, bn)
            if role == "block":
                b = next(spec_blocks)
                main = [r for r in rows[start:] if r.role == "block"]
                q = CostQuery(H=shape[2], W=shape[3], e=b.e, n_md=b.n_md, d=b.d)
                blocks.append(BlockCheck(
                    name, b.d, b.n_md, b.e, shape[2], shape[3],
                    sum(r.params for r in main), params_closed("narrow_block", q),
                    sum(r.multi_adds for r in main), multiadds_narrow_block(q) * probe_shape[0],
                ))
    except ValueError as exc:
        raise ValueError(f"cannot resolve shapes for probe {probe_shape}: {exc}") from exc
    arch = graph.spec.name or "custom"
    reported = REPORTED_PARAMS.get(arch) if graph.spec.e == 4 else None
    return CostReport(arch, probe_shape, rows, blocks, bn[0], graph.nominal_depth, reported)


# ------------------------------------------------------------ design rules


@dataclass
class RuleResult:
    rule: str
    status: Literal["pass", "fail", "not evaluated"]
    detail: str


def design_rule_check(graph: LayerGraph, fps: float | None = None) -> list[RuleResult]:
    """Depth >= 25 always; FPS >= 50 only when a measurement is supplied."""
    depth = graph.nominal_depth
    results = [RuleResult(
        "depth", "pass" if depth >= MIN_DEPTH else "fail",
        f"nominal depth {depth} {'>=' if depth >= MIN_DEPTH else '<'} {MIN_DEPTH}",
    )]
    if fps is None:
        results.append(RuleResult("fps", "not evaluated", "hardware-dependent; supply a measured value with --fps"))
    else:
        ok = fps >= MIN_FPS
        results.append(RuleResult("fps", "pass" if ok else "fail",
                                  f"{fps:.2f} FPS {'>=' if ok else '<'} {MIN_FPS:g}"))
    return results
