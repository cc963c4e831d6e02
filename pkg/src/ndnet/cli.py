"""``ndnet`` command line: analyze, build, synth, train, eval, bench.

Exit codes: 0 success, 1 invalid input (bad flags, files, presets, sizes),
2 runtime failure. The resolved configuration of every run is echoed to
stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return h, w


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ndnet", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="emit structured JSON instead of text")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def arch_flags(sp, required=True):
        sp.add_argument("--arch", required=required, help="preset name or architecture JSON file")
        sp.add_argument("--expansion", type=int, help="override the expansion factor e")
        sp.add_argument("--classes", type=int, help="override the class count")

    a = sub.add_parser("analyze", help="parameter and Multi-adds report")
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--arch", help="preset name or architecture JSON file")
    src.add_argument("--ckpt", type=Path, help="read the architecture from a checkpoint")
    a.add_argument("--expansion", type=int)
    a.add_argument("--classes", type=int)
    a.add_argument("--input", type=_size, default=(1024, 2048), help="probe size HxW (default 1024x2048)")
    a.add_argument("--head", action="store_true", help="include the FCN32 head in the report")
    a.add_argument("--layers", action="store_true", help="print per-layer rows")
    a.add_argument("--csv", type=Path, help="write per-layer rows to this CSV file")
    a.add_argument("--fps", type=float, help="measured FPS for the speed design rule")

    b = sub.add_parser("build", help="write an architecture JSON file")
    arch_flags(b)
    b.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("synth", help="generate a synthetic segmentation dataset")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--size", type=_size, default=(64, 64))
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a segmenter and save a checkpoint")
    arch_flags(t)
    t.add_argument("--data", type=Path, required=True)
    t.add_argument("--steps", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path, required=True, help="checkpoint path (.ndn)")
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--crop", type=_size, help="crop HxW (default: dataset image size)")
    t.add_argument("--scales", type=float, nargs="+", default=[1.0])
    t.add_argument("--mirror", type=float, default=0.5, help="horizontal mirror probability")
    t.add_argument("--remap", type=Path, help="raw_id,train_id CSV")
    t.add_argument("--loss-csv", type=Path, help="loss trace path (default: <out>.loss.csv)")
    t.add_argument("--log-every", type=int, default=100)

    e = sub.add_parser("eval", help="per-class IoU and mIoU of a checkpoint")
    e.add_argument("--ckpt", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True)
    e.add_argument("--remap", type=Path)
    e.add_argument("--batch-size", type=int, default=16)

    n = sub.add_parser("bench", help="eval-mode forward throughput")
    src = n.add_mutually_exclusive_group(required=True)
    src.add_argument("--ckpt", type=Path)
    src.add_argument("--arch")
    n.add_argument("--expansion", type=int)
    n.add_argument("--classes", type=int)
    n.add_argument("--input", type=_size, default=(1024, 2048))
    n.add_argument("--runs", type=int, default=5)
    n.add_argument("--warmup", type=int, default=1)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--backbone-only", action="store_true", help="time the backbone without the FCN32 head")
    n.add_argument("--backend", choices=["cython", "python"], help="kernel backend")
    n.add_argument("--csv", type=Path, help="write per-run latencies to this CSV file")
    return p


def _echo(command: str, config: dict) -> None:
    print(json.dumps({"command": command, "config": config}, default=str, sort_keys=True), file=sys.stderr)


def _spec(args):
    from .model import resolve_arch

    return resolve_arch(args.arch, e=args.expansion, num_classes=args.classes)


def _segmenter_from(args, seed=0, head=True):
    from .data import load_checkpoint
    from .model import attach_fcn32_head, build_ndnet, init_params

    if getattr(args, "ckpt", None):
        if not args.ckpt.is_file():
            raise UsageError(f"checkpoint not found: {args.ckpt}")
        graph, _ = load_checkpoint(args.ckpt)
        return graph
    graph = build_ndnet(_spec(args))
    if head:
        graph = attach_fcn32_head(graph)
    return init_params(graph, seed)


def cmd_analyze(args) -> int:
    from .cost import count_exact, design_rule_check
    from .model import attach_fcn32_head, build_ndnet

    if args.ckpt:
        from .data.checkpoint import read_header
        from .model import NetworkSpec

        if not args.ckpt.is_file():
            raise UsageError(f"checkpoint not found: {args.ckpt}")
        header, _ = read_header(args.ckpt)
        spec = NetworkSpec.from_dict(header["network"])
    else:
        spec = _spec(args)
    h, w = args.input
    _echo("analyze", {"network": spec.to_dict(), "input": [h, w], "head": args.head})
    graph = build_ndnet(spec)
    if args.head:
        graph = attach_fcn32_head(graph)
    report = count_exact(graph, (1, 3, h, w))
    rules = design_rule_check(graph, args.fps)
    if args.csv:
        args.csv.write_text(report.to_csv())
    if args.json:
        d = report.to_dict()
        d["design_rules"] = [r.__dict__ for r in rules]
        print(json.dumps(d, indent=2))
    else:
        print(report.to_text(layers=args.layers))
        for r in rules:
            print(f"rule {r.rule:<6} {r.status}: {r.detail}")
    return EXIT_OK


def cmd_build(args) -> int:
    from .model import build_ndnet, save_arch

    spec = _spec(args)
    _echo("build", {"network": spec.to_dict(), "out": args.out})
    graph = build_ndnet(spec)
    save_arch(spec, args.out)
    print(json.dumps(spec.to_dict(), indent=2) if args.json else graph.describe())
    return EXIT_OK


def cmd_synth(args) -> int:
    from .data import generate_synthetic_dataset

    h, w = args.size
    _echo("synth", {"out": args.out, "n": args.n, "size": [h, w], "classes": args.classes, "seed": args.seed})
    m = generate_synthetic_dataset(args.out, args.n, h, w, args.classes, args.seed)
    msg = {"root": str(m.root), "samples": len(m), "num_classes": m.num_classes}
    print(json.dumps(msg) if args.json else f"wrote {len(m)} samples to {m.root}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .data import TrainState, load_dataset_dir, save_checkpoint
    from .model import attach_fcn32_head, build_ndnet, init_params
    from .train import TrainConfig, train

    manifest = load_dataset_dir(args.data, remap=args.remap)
    spec = _spec(args).with_(num_classes=args.classes or manifest.num_classes)
    samples = manifest.samples()
    crop = args.crop or samples[0].label.shape
    cfg = TrainConfig(
        base_lr=args.lr, total_steps=args.steps, batch_size=args.batch_size, crop=crop,
        scales=tuple(args.scales), mirror_prob=args.mirror, weight_decay=args.weight_decay,
        ignore_index=manifest.ignore_index, seed=args.seed,
    )
    _echo("train", {"network": spec.to_dict(), "train": cfg.to_dict(), "data": args.data, "out": args.out})
    graph = init_params(attach_fcn32_head(build_ndnet(spec, cfg.bn_eps, cfg.bn_momentum)), args.seed)
    result = train(graph, samples, cfg, log_every=args.log_every)
    save_checkpoint(graph, args.out, TrainState(result.step, result.velocity))
    loss_csv = args.loss_csv or args.out.with_name(args.out.name + ".loss.csv")
    result.write_csv(loss_csv)
    summary = {"checkpoint": str(args.out), "loss_csv": str(loss_csv),
               "initial_loss": result.losses[0], "final_loss": result.final_loss}
    print(json.dumps(summary) if args.json else
          f"loss {result.losses[0]:.4f} -> {result.final_loss:.4f} (mean of last 10); checkpoint {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data import load_checkpoint, load_dataset_dir
    from .train import evaluate

    if not args.ckpt.is_file():
        raise UsageError(f"checkpoint not found: {args.ckpt}")
    graph, _ = load_checkpoint(args.ckpt)
    manifest = load_dataset_dir(args.data, remap=args.remap)
    k = graph.spec.num_classes
    if manifest.num_classes != k:
        raise UsageError(f"dataset has {manifest.num_classes} classes, checkpoint predicts {k}")
    _echo("eval", {"ckpt": args.ckpt, "data": args.data, "num_classes": k})
    cm, res = evaluate(graph, manifest.samples(), k, manifest.ignore_index, args.batch_size)
    if args.json:
        print(json.dumps({"per_class_iou": res.per_class, "miou": res.mean, "confusion": cm.counts.tolist()}))
    else:
        print(res.table())
    return EXIT_OK


def cmd_bench(args) -> int:
    from .nn import _backend
    from .train import benchmark_fps

    if args.backend:
        _backend.use(args.backend)
    if args.runs < 3 or args.warmup < 1:
        raise UsageError("bench needs --runs >= 3 and --warmup >= 1")
    graph = _segmenter_from(args, args.seed, head=not args.backbone_only)
    h, w = args.input
    graph.check_input_shape((1, 3, h, w))
    _echo("bench", {"network": graph.spec.to_dict(), "input": [h, w], "runs": args.runs,
                    "warmup": args.warmup, "backend": _backend.BACKEND, "head": graph.has_head})
    report = benchmark_fps(graph, (1, 3, h, w), args.runs, args.warmup, seed=args.seed)
    if args.csv:
        args.csv.write_text(report.to_csv())
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "build": cmd_build,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    from .data import DatasetError
    from .data.checkpoint import CheckpointError
    from .nn.tensor import ShapeError

    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, DatasetError, CheckpointError, ShapeError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
