"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from ndnet.cost import CostQuery, count_exact, multiadds_separable, multiadds_standard, separable_ratio
from ndnet.data import generate_synthetic_dataset, load_checkpoint, save_checkpoint
from ndnet.model import PRESETS, NarrowBottleneckSpec, NetworkSpec, build_narrow_bottleneck, build_ndnet, build_segmenter
from ndnet.nn import _backend, gradcheck
from ndnet.nn import functional as F
from ndnet.nn.layers import Conv2d
from ndnet.train import ConfusionMatrix, benchmark_fps, desk_config, evaluate, miou, train

from conftest import BACKENDS
from oracles import conv2d_naive, depthwise_naive, narrow_block_params, set_iou


class Criterion:
    def __init__(self, number, title, log, limit_s=None):
        self.number, self.title, self.log, self.limit_s = number, title, log, limit_s
        self.failed = []

    def check(self, ok, what):
        if not ok:
            self.failed.append(what)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if self.limit_s is not None and elapsed >= self.limit_s:
            self.failed.append(f"runtime {elapsed:.1f}s >= {self.limit_s}s")
        if exc is not None:
            self.failed.append(f"{exc_type.__name__}: {exc}")
        status = "FAIL" if self.failed else "PASS"
        line = f"criterion {self.number:>2} {status}  {self.title}  [{elapsed:.2f}s]"
        if self.failed:
            line += "  -- " + "; ".join(self.failed)
        print(line)
        self.log.append(line)
        if exc is None and self.failed:
            raise AssertionError(line)
        return False


@pytest.fixture(autouse=True)
def _restore_backend():
    before = _backend.BACKEND
    yield
    _backend.use(before)


@pytest.fixture
def criterion(acceptance_log):
    return lambda number, title, limit_s=None: Criterion(number, title, acceptance_log, limit_s)


def test_criterion_01_table2_params(criterion):
    reported = {"ndnet29": 515_000, "ndnet45": 386_000, "ndnet61": 292_000, "ndnet29-wide": 3_505_000}
    expected = {"ndnet29": 512_040, "ndnet45": 384_416, "ndnet61": 291_336, "ndnet29-wide": 3_473_440}
    with criterion(1, "backbone conv params within 3% of the reported counts", limit_s=1.0) as c:
        for name, ref in reported.items():
            got = count_exact(build_ndnet(PRESETS[name])).backbone_params
            c.check(got == expected[name], f"{name}: {got} != {expected[name]}")
            c.check(abs(got - ref) / ref <= 0.03, f"{name}: {got} vs {ref}")


def test_criterion_02_closed_form_exactness(criterion):
    rng = np.random.default_rng(2)
    specs = [PRESETS[n] for n in ("ndnet29", "ndnet45", "ndnet61")]
    for i in range(50):
        specs.append(NetworkSpec(tuple(int(v) for v in rng.integers(1, 65, 3)),
                                 tuple(int(v) for v in rng.integers(1, 9, 3)),
                                 e=int(rng.integers(1, 7)), name=f"random{i}"))
    with criterion(2, "block params equal narrow-block closed form, 3 presets + 50 random", limit_s=5.0) as c:
        for s in specs:
            r = count_exact(build_ndnet(s))
            for b, d, n in zip(r.blocks, s.depth_combination, s.channel_combination):
                c.check(b.params_delta == 0, f"{s.name} {b.block}: delta {b.params_delta}")
                c.check(b.params == narrow_block_params(d, s.e, n), f"{s.name} {b.block}: {b.params}")
            c.check(r.block_params == sum(narrow_block_params(d, s.e, n)
                                          for d, n in zip(s.depth_combination, s.channel_combination)), s.name)


def test_criterion_03_separable_ratio(criterion):
    with criterion(3, "standard/separable Multi-adds ratio k^2 N / (k^2 + N) for k=3") as c:
        ratios = []
        for n in (64, 128, 256, 512, 1024):
            r = separable_ratio(3, n)
            measured = Fraction(multiadds_standard(CostQuery(k=3, H=32, W=16, M=48, N=n)),
                                multiadds_separable(CostQuery(k=3, H=32, W=16, M=48, N=n)))
            c.check(measured == r, f"N={n}: Multi-adds ratio {measured} != {r}")
            c.check(abs(float(r) - 9 * n / (9 + n)) < 1e-12, f"N={n}: {float(r)}")
            c.check(r < 9, f"N={n}: ratio {float(r)} not < 9")
            ratios.append(r)
        c.check(all(a < b for a, b in zip(ratios, ratios[1:])), "ratios not increasing in N")


def _conv_cases(rng, count):
    for _ in range(count):
        n, c, o = (int(v) for v in rng.integers(1, 4, 3))
        h, w = (int(v) for v in rng.integers(3, 9, 2))
        k = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        pad = (int(rng.integers(0, k[0])), int(rng.integers(0, k[1])))
        yield n, c, o, h, w, k, stride, pad


@pytest.mark.parametrize("variant", ["standard", "depthwise", "asymmetric"])
def test_criterion_04_conv_oracles(criterion, variant):
    rng = np.random.default_rng({"standard": 40, "depthwise": 41, "asymmetric": 42}[variant])
    cases = 0
    worst = 0.0
    with criterion(4, f"{variant} conv vs naive loops, >=100 float32 cases per backend", limit_s=60.0) as c:
        for backend in BACKENDS:
            _backend.use(backend)
            for n, ch, o, h, w, k, stride, pad in _conv_cases(rng, 100):
                x = rng.standard_normal((n, ch, h, w)).astype(np.float32)
                if variant == "standard":
                    wt = rng.standard_normal((o, ch, *k)).astype(np.float32)
                    got = F.conv2d(x, wt, F.ConvSpec(ch, o, k, stride, pad))
                    ref = conv2d_naive(x, wt, stride, pad)
                elif variant == "depthwise":
                    wt = rng.standard_normal((ch, 1, *k)).astype(np.float32)
                    got = F.conv2d_depthwise(x, wt, F.ConvSpec(ch, ch, k, stride, pad, "per-channel"))
                    ref = depthwise_naive(x, wt, stride, pad)
                else:
                    pad = (int(rng.integers(0, 3)), int(rng.integers(0, 3)))
                    w31 = rng.standard_normal((o, ch, 3, 1)).astype(np.float32)
                    w13 = rng.standard_normal((o, o, 1, 3)).astype(np.float32)
                    got = F.conv2d_asymmetric(x, w31, w13, F.ConvSpec(ch, o, 3, stride, pad))
                    mid = conv2d_naive(x, w31, (stride[0], 1), (pad[0], 0)).astype(np.float32)
                    ref = conv2d_naive(mid, w13, (1, stride[1]), (0, pad[1]))
                c.check(got.dtype == np.float32, f"{backend}: output dtype {got.dtype}")
                c.check(got.shape == ref.shape, f"{backend}: shape {got.shape} != {ref.shape}")
                if got.shape == ref.shape:
                    worst = max(worst, float(np.abs(got - ref).max()))
                cases += 1
        c.check(worst < 1e-4, f"max abs error {worst:.2e}")
        c.check(cases >= 100 * len(BACKENDS), f"only {cases} cases")
        c.title += f" ({cases} cases, max err {worst:.1e})"


def _gradcheck_suite(rng):
    """(name, fn, grad_fn, inputs) for every differentiable op."""

    def conv(spec, shape):
        x, w = rng.standard_normal(shape), rng.standard_normal(spec.weight_shape)

        def grad(g, x, w):
            fwd = F.conv2d_depthwise_forward if spec.depthwise else F.conv2d_forward
            bwd = F.conv2d_depthwise_backward if spec.depthwise else F.conv2d_backward
            return bwd(g, fwd(x, w, spec)[1])

        fn = (lambda x, w: F.conv2d_depthwise(x, w, spec)) if spec.depthwise else (lambda x, w: F.conv2d(x, w, spec))
        return fn, grad, [x, w]

    yield ("conv2d 3x3 s1 p1", *conv(F.ConvSpec(3, 4, 3, 1, 1), (2, 3, 5, 5)))
    yield ("conv2d 3x3 s2 p1", *conv(F.ConvSpec(2, 3, 3, 2, 1), (1, 2, 7, 6)))
    yield ("conv2d 1x1 s2", *conv(F.ConvSpec(4, 3, 1, 2), (1, 4, 5, 4)))
    yield ("depthwise s1", *conv(F.ConvSpec(3, 3, 3, 1, 1, "per-channel"), (2, 3, 6, 7)))
    yield ("depthwise s2", *conv(F.ConvSpec(3, 3, 3, 2, 1, "per-channel"), (2, 3, 6, 7)))

    aspec = F.ConvSpec(2, 3, 3, 2, 1)
    yield ("asymmetric 3x1+1x3",
           lambda x, a, b: F.conv2d_asymmetric(x, a, b, aspec),
           lambda g, x, a, b: F.conv2d_asymmetric_backward(g, F.conv2d_asymmetric_forward(x, a, b, aspec)[1]),
           [rng.standard_normal((1, 2, 6, 6)), rng.standard_normal((3, 2, 3, 1)), rng.standard_normal((3, 3, 1, 3))])

    xp = rng.permutation(2 * 2 * 7 * 7).reshape(2, 2, 7, 7) * 0.1
    yield ("maxpool 3x3 s2 p1", F.maxpool2d,
           lambda g, x: [F.maxpool2d_backward(g, F.maxpool2d_forward(x)[1])], [xp])

    def bn_train(x, gm, bt):
        return F.batchnorm_forward(x, F.BatchNormState(gm, bt), update_stats=False)

    yield ("batchnorm train", lambda *a: bn_train(*a)[0], lambda g, *a: F.batchnorm_backward(g, bn_train(*a)[1]),
           [rng.standard_normal((4, 3, 5, 5)) * 2 + 1, rng.standard_normal(3), rng.standard_normal(3)])

    mean, var = rng.standard_normal(3), rng.random(3) + 0.5

    def bn_eval(x, gm, bt):
        return F.batchnorm_forward(x, F.BatchNormState(gm, bt, mean, var, mode="eval"))

    yield ("batchnorm eval", lambda *a: bn_eval(*a)[0], lambda g, *a: F.batchnorm_backward(g, bn_eval(*a)[1]),
           [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal(3), rng.standard_normal(3)])

    xr = rng.standard_normal((2, 3, 4, 4))
    xr = np.where(np.abs(xr) < 1e-2, 0.5, xr)
    yield ("relu (|x| > 1e-2)", F.relu, lambda g, x: [F.relu_backward(g, x > 0)], [xr])

    yield ("bilinear upsample x4", lambda x: F.bilinear_upsample(x, 4),
           lambda g, x: [F.bilinear_upsample_backward(g, F.bilinear_upsample_forward(x, 4)[1])],
           [rng.standard_normal((1, 2, 3, 4))])

    labels = rng.integers(0, 4, (2, 3, 3))
    labels[1, 0, 0] = 255
    yield ("softmax cross-entropy", lambda z: np.array(F.softmax_cross_entropy(z, labels)[0]),
           lambda g, z: [F.softmax_cross_entropy(z, labels)[1] * g], [rng.standard_normal((2, 4, 3, 3))])

    layer = build_narrow_bottleneck(NarrowBottleneckSpec(2, 2, stride=2, in_channels=3))
    for _, m in layer.named_modules():
        if isinstance(m, Conv2d):
            m.weight.data[...] = rng.standard_normal(m.weight.shape)

    def layer_grad(g, x):
        layer.forward(x, train=True)
        return [layer.backward(g)]

    yield ("narrow bottleneck layer", lambda x: layer.forward(x, train=True), layer_grad,
           [rng.standard_normal((2, 3, 6, 6))])


def test_criterion_05_gradchecks(criterion):
    with criterion(5, "finite-difference gradchecks, float64, rel err < 1e-5", limit_s=120.0) as c:
        worst = 0.0
        for backend in BACKENDS:
            _backend.use(backend)
            for name, fn, grad, inputs in _gradcheck_suite(np.random.default_rng(5)):
                report = gradcheck(fn, grad, inputs, tolerance=1e-5)
                c.check(report.passed, f"{backend} {name}: {report.summary()}")
                worst = max([worst, *report.max_rel_error])
        c.title += f" (max {worst:.1e})"


def test_criterion_06_batchnorm_statistics(criterion):
    with criterion(6, "BN train-mode moments and running-stat blend arithmetic") as c:
        rng = np.random.default_rng(6)
        x = (rng.standard_normal((16, 8, 16, 16)) * 3 + 2).astype(np.float32)
        state = F.BatchNormState.create(8)
        y, _ = F.batchnorm_forward(x, state)
        m = y.astype(np.float64).mean(axis=(0, 2, 3))
        v = y.astype(np.float64).var(axis=(0, 2, 3))
        c.check(np.abs(m).max() < 1e-5, f"max |mean| {np.abs(m).max():.2e}")
        c.check(np.abs(v - 1).max() < 1e-3, f"max |var - 1| {np.abs(v - 1).max():.2e}")

        # momentum 0.1, running mean 0, batch mean 1 -> 0.1
        s = F.BatchNormState.create(1, momentum=0.1, dtype=np.float64)
        F.batchnorm_forward(np.ones((2, 1, 2, 2)), s)
        c.check(s.running_mean[0] == 0.1, f"running mean {s.running_mean[0]!r} != 0.1")
        c.check(s.running_var[0] == 0.9, f"running var {s.running_var[0]!r} != 0.9")

        # scripted dyadic sequence, compared against rational arithmetic
        for momentum in (Fraction(1, 2), Fraction(1, 4), Fraction(0), Fraction(1)):
            s = F.BatchNormState.create(2, momentum=float(momentum), dtype=np.float64)
            want_m, want_v = [Fraction(0)] * 2, [Fraction(1)] * 2
            for a, b in [((1, -2), (1, 2)), ((3, 0.5), (0.25, 4)), ((-1, 8), (2, 0.5))]:
                # channel j holds a_j - b_j and a_j + b_j in equal numbers: mean a_j, biased var b_j^2
                batch = np.empty((2, 2, 2, 2))
                for j in range(2):
                    batch[:, j, 0, :] = a[j] - b[j]
                    batch[:, j, 1, :] = a[j] + b[j]
                F.batchnorm_forward(batch, s)
                for j in range(2):
                    want_m[j] = (1 - momentum) * want_m[j] + momentum * Fraction(a[j])
                    want_v[j] = (1 - momentum) * want_v[j] + momentum * Fraction(b[j]) ** 2
                got = [Fraction(float(t)) for t in s.running_mean], [Fraction(float(t)) for t in s.running_var]
                c.check(got == (want_m, want_v), f"momentum {momentum}: {got} != {(want_m, want_v)}")


def test_criterion_07_nominal_depths(criterion):
    with criterion(7, "nominal depths 29, 45, 61") as c:
        for name, depth in (("ndnet29", 29), ("ndnet45", 45), ("ndnet61", 61)):
            got = build_ndnet(PRESETS[name]).nominal_depth
            c.check(got == depth, f"{name}: {got}")


@pytest.mark.slow
def test_criterion_08_desk_training(criterion, tmp_path):
    with criterion(8, "toy net on synthetic 3-class 64x64, 1000 steps", limit_s=300.0) as c:
        data = generate_synthetic_dataset(tmp_path, n_samples=200, h=64, w=64, num_classes=3, seed=0).samples()
        cfg = desk_config()
        c.check(cfg.total_steps <= 1000, f"{cfg.total_steps} steps")
        graph = build_segmenter(PRESETS["toy"].with_(num_classes=3), seed=0)
        res = train(graph, data, cfg)
        _, iou = evaluate(graph, data, 3)
        initial, final = res.losses[0], res.final_loss
        c.check(iou.mean >= 0.85, f"mIoU {iou.mean:.4f} < 0.85")
        c.check(final < 0.2 * initial, f"final loss {final:.4f} >= 0.2 x {initial:.4f}")
        c.title += f" (mIoU {iou.mean:.4f}, loss {initial:.3f} -> {final:.3f})"


def test_criterion_09_miou_oracle(criterion):
    with criterion(9, "miou equals set-based IoU oracle on 200 random 8x8 pairs") as c:
        rng = np.random.default_rng(9)
        for i in range(200):
            gt = rng.integers(0, 4, (8, 8))
            gt[rng.random((8, 8)) < 0.15] = 255
            pred = rng.integers(0, 4, (8, 8))
            per_class, mean = set_iou(pred, gt, 4)
            res = miou(ConfusionMatrix(4).update(pred, gt))
            c.check(res.exact_mean == mean, f"pair {i}: {res.exact_mean} != {mean}")
            c.check(res.mean == float(mean), f"pair {i}: float mean")
            c.check(res.per_class == [None if v is None else float(v) for v in per_class], f"pair {i}: per class")


def test_criterion_10_efficiency_direction(criterion):
    with criterion(10, "NDNet29 faster and cheaper than wider NDNet29 on the same input") as c:
        shape = (1, 3, 512, 1024)
        fps, madds = {}, {}
        for name in ("ndnet29", "ndnet29-wide"):
            graph = build_segmenter(PRESETS[name], seed=0)
            madds[name] = count_exact(graph, (1, 3, 1024, 2048)).total_multi_adds
            fps[name] = benchmark_fps(graph, shape, runs=3, warmup=1).mean_fps
        c.check(fps["ndnet29"] > fps["ndnet29-wide"], f"FPS {fps}")
        c.check(madds["ndnet29"] < madds["ndnet29-wide"], f"Multi-adds {madds}")
        c.title += f" (FPS {fps['ndnet29']:.2f} vs {fps['ndnet29-wide']:.2f} at 512x1024)"


def test_criterion_11_checkpoint_round_trip(criterion, tmp_path):
    with criterion(11, "checkpoint save/load reproduces eval logits bitwise") as c:
        probe = np.random.default_rng(11).standard_normal((2, 3, 64, 64)).astype(np.float32)
        for name in ("toy", "ndnet45"):
            graph = build_segmenter(PRESETS[name], seed=3)
            graph.forward(probe, "train")
            before = graph.forward(probe, "eval")
            path = save_checkpoint(graph, tmp_path / f"{name}.ndn")
            loaded, _ = load_checkpoint(path)
            after = loaded.forward(probe, "eval")
            c.check(after.dtype == before.dtype and np.array_equal(after, before), f"{name}: logits differ")
