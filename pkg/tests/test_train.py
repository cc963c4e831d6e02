import itertools
from fractions import Fraction

import numpy as np
import pytest

from ndnet.cost import count_exact
from ndnet.data import Sample, generate_synthetic_dataset
from ndnet.model import PRESETS, NetworkSpec, build_ndnet, build_segmenter
from ndnet.train import (
    ConfusionMatrix,
    NonFiniteGradientError,
    TrainConfig,
    augment_sample,
    benchmark_fps,
    desk_config,
    evaluate,
    lr_at_step,
    miou,
    sgd_momentum_step,
    train,
    update_confusion,
)
from ndnet.train.bench import summarize

from oracles import set_iou


# ---------------------------------------------------------------- schedule


def test_lr_full_schedule():
    cfg = TrainConfig(total_steps=80_000)
    assert cfg.milestone_steps() == [35_000, 60_000]
    assert lr_at_step(cfg, 0) == 0.1
    assert lr_at_step(cfg, 34_999) == 0.1
    assert lr_at_step(cfg, 35_000) == pytest.approx(0.01, rel=1e-15)
    assert lr_at_step(cfg, 60_000) == pytest.approx(0.001, rel=1e-15)
    assert lr_at_step(cfg, 79_999) == pytest.approx(0.1 / 100, rel=1e-15)


def test_lr_desk_schedule():
    cfg = TrainConfig(total_steps=800)
    assert lr_at_step(cfg, 349) == 0.1
    assert lr_at_step(cfg, 350) == pytest.approx(0.01)


def test_lr_monotone_with_three_values():
    cfg = TrainConfig(total_steps=1000)
    lrs = [lr_at_step(cfg, s) for s in range(1000)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert len(set(lrs)) == 3
    with pytest.raises(ValueError):
        lr_at_step(cfg, 1000)
    with pytest.raises(ValueError):
        lr_at_step(cfg, -1)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_milestones=(0.75, 0.5))
    with pytest.raises(ValueError):
        TrainConfig(lr_milestones=(0.0, 0.5))
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    assert TrainConfig().scales == (0.75, 1.0, 1.25, 1.5, 2.0)
    assert TrainConfig().weight_decay == 1e-4


# --------------------------------------------------------------------- sgd


def _one(v):
    return np.array([v], dtype=np.float64)


def test_sgd_single_step():
    cfg = TrainConfig(total_steps=10, weight_decay=0.0)
    w, vel = {"w": _one(0.0)}, {}
    sgd_momentum_step(w, {"w": _one(1.0)}, vel, cfg, 0)
    assert vel["w"][0] == 1.0
    assert w["w"][0] == -0.1


def test_sgd_two_steps():
    cfg = TrainConfig(total_steps=10, weight_decay=0.0)
    w, vel = {"w": _one(0.0)}, {}
    for step in range(2):
        sgd_momentum_step(w, {"w": _one(1.0)}, vel, cfg, step)
    assert vel["w"][0] == pytest.approx(1.9, abs=1e-15)
    assert w["w"][0] == pytest.approx(-0.29, abs=1e-15)


def test_sgd_zero_gradient_is_noop():
    cfg = TrainConfig(total_steps=10)
    w = {"w": np.zeros(3)}
    sgd_momentum_step(w, {"w": np.zeros(3)}, {}, cfg, 0)
    assert np.all(w["w"] == 0)


def test_sgd_plain_descent_without_momentum(rng):
    cfg = TrainConfig(total_steps=10, momentum=0.0, weight_decay=0.0, base_lr=0.3)
    w0 = rng.standard_normal(5)
    g = rng.standard_normal(5)
    w = {"w": w0.copy()}
    vel = {"w": rng.standard_normal(5)}
    sgd_momentum_step(w, {"w": g}, vel, cfg, 0)
    np.testing.assert_array_equal(w["w"], w0 - 0.3 * g)


def test_weight_decay_only_where_masked():
    cfg = TrainConfig(total_steps=10, weight_decay=0.5)
    params = {"conv.weight": _one(2.0), "bn.gamma": _one(2.0)}
    grads = {k: _one(0.0) for k in params}
    sgd_momentum_step(params, grads, {}, cfg, 0, decay={"conv.weight": True, "bn.gamma": False})
    assert params["conv.weight"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)
    assert params["bn.gamma"][0] == 2.0


def test_non_finite_gradient_rejected_before_mutation():
    cfg = TrainConfig(total_steps=10)
    params = {"a": _one(1.0), "b": _one(1.0)}
    vel = {}
    with pytest.raises(NonFiniteGradientError, match="b"):
        sgd_momentum_step(params, {"a": _one(1.0), "b": _one(np.nan)}, vel, cfg, 0)
    assert params["a"][0] == 1.0 and vel == {}


# ------------------------------------------------------------ augmentation


def _pair(rng, h=12, w=10):
    img = rng.standard_normal((3, h, w)).astype(np.float32)
    lab = rng.integers(0, 4, (h, w))
    return img, lab


def test_augment_identity_at_scale_one(rng):
    img, lab = _pair(rng)
    cfg = TrainConfig(crop=(12, 10), scales=(1.0,), mirror_prob=0.0)
    out_img, out_lab = augment_sample(img, lab, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(out_img, img)
    np.testing.assert_array_equal(out_lab, lab)


def test_mirror_is_involution(rng):
    img, lab = _pair(rng)
    cfg = TrainConfig(crop=(12, 10), scales=(1.0,), mirror_prob=1.0)
    once = augment_sample(img, lab, cfg, np.random.default_rng(0))
    twice = augment_sample(*once, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(once[0], img[:, :, ::-1])
    np.testing.assert_array_equal(twice[0], img)
    np.testing.assert_array_equal(twice[1], lab)


def test_augment_label_values_preserved(rng):
    img, lab = _pair(rng, 20, 16)
    cfg = TrainConfig(crop=(24, 24), scales=(0.75, 1.0, 1.25, 1.5, 2.0))
    r = np.random.default_rng(5)
    allowed = set(np.unique(lab).tolist()) | {255}
    for _ in range(30):
        out_img, out_lab = augment_sample(img, lab, cfg, r)
        assert out_img.shape == (3, 24, 24) and out_lab.shape == (24, 24)
        assert set(np.unique(out_lab).tolist()) <= allowed


def test_augment_pads_with_ignore_and_rejects_without_padding(rng):
    img, lab = _pair(rng, 6, 6)
    cfg = TrainConfig(crop=(8, 8), scales=(1.0,), mirror_prob=0.0)
    out_img, out_lab = augment_sample(img, lab, cfg, np.random.default_rng(0))
    assert (out_lab == 255).sum() == 64 - 36
    assert np.all(out_img[:, out_lab == 255] == 0)
    with pytest.raises(ValueError, match="padding disabled"):
        augment_sample(img, lab, TrainConfig(crop=(8, 8), scales=(1.0,), pad_if_needed=False), rng)


def test_augment_accepts_batched_image(rng):
    img, lab = _pair(rng)
    cfg = TrainConfig(crop=(8, 8), scales=(1.0,))
    out, _ = augment_sample(img[None], lab, cfg, rng)
    assert out.shape == (1, 3, 8, 8)


# ----------------------------------------------------------------- metrics


def test_confusion_basics():
    cm = ConfusionMatrix(2)
    update_confusion(cm, np.array([[0, 1], [1, 1]]), np.array([[0, 0], [1, 1]]))
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
    cm2 = ConfusionMatrix(3).update(np.full((4, 4), 2), np.full((4, 4), 255))
    assert cm2.total == 0
    perfect = ConfusionMatrix(3).update(np.arange(9).reshape(3, 3) % 3, np.arange(9).reshape(3, 3) % 3)
    assert np.trace(perfect.counts) == 9
    with pytest.raises(ValueError):
        ConfusionMatrix(2).update(np.array([0]), np.array([2]))
    with pytest.raises(ValueError):
        ConfusionMatrix(2).update(np.array([0, 0]), np.array([0]))


def test_miou_hand_cases():
    gt = np.array([[0, 0], [1, 1]])
    res = miou(ConfusionMatrix(2).update(np.zeros((2, 2), int), gt))
    assert res.per_class == [0.5, 0.0]
    assert res.mean == 0.25
    perfect = miou(ConfusionMatrix(3).update(gt, gt))
    assert perfect.per_class == [1.0, 1.0, None] and perfect.mean == 1.0
    with pytest.raises(ValueError):
        miou(ConfusionMatrix(2))


def test_miou_matches_set_oracle(rng):
    for _ in range(50):
        gt = rng.integers(0, 4, (8, 8))
        gt[rng.random((8, 8)) < 0.1] = 255
        pred = rng.integers(0, 4, (8, 8))
        per_class, mean = set_iou(pred, gt, 4)
        res = miou(ConfusionMatrix(4).update(pred, gt))
        assert res.exact_mean == mean
        assert res.per_class == [None if v is None else float(v) for v in per_class]


def test_confusion_merge_is_lossless(rng):
    maps = [(rng.integers(0, 3, (5, 5)), rng.integers(0, 3, (5, 5))) for _ in range(6)]
    whole = ConfusionMatrix(3)
    for p, g in maps:
        whole.update(p, g)
    shards = [ConfusionMatrix(3) for _ in range(2)]
    for i, (p, g) in enumerate(maps):
        shards[i % 2].update(p, g)
    np.testing.assert_array_equal((shards[1] + shards[0]).counts, whole.counts)
    assert 0 <= miou(whole).mean <= 1


# ------------------------------------------------------------------- bench


class FakeClock:
    def __init__(self, step):
        self.t = 0.0
        self.steps = itertools.cycle(step)

    def __call__(self):
        self.t += next(self.steps)
        return self.t


def test_bench_with_injected_clock():
    graph = build_segmenter(PRESETS["toy"], seed=0)
    # each run reads the clock twice: 0 ms before, 20 ms after
    report = benchmark_fps(graph, (1, 3, 32, 32), runs=4, warmup=1, clock=FakeClock([0.0, 0.020]))
    assert report.latencies_ms == pytest.approx([20.0] * 4)
    assert report.mean_fps == pytest.approx(50.0)
    assert report.cv == pytest.approx(0.0)
    assert report.input_shape == (1, 3, 32, 32) and report.warmup == 1


def test_bench_cv_formula():
    lat = [10.0, 12.0, 14.0, 20.0]
    r = summarize(lat, (1, 3, 32, 32), 1)
    mean = sum(lat) / 4
    std = (sum((x - mean) ** 2 for x in lat) / 4) ** 0.5
    assert r.cv == pytest.approx(std / mean, rel=1e-12)
    assert r.mean_fps == pytest.approx(1000 / mean, rel=1e-12)
    assert r.to_csv().splitlines()[0] == "run,latency_ms"


def test_bench_argument_checks():
    graph = build_segmenter(PRESETS["toy"], seed=0)
    with pytest.raises(ValueError):
        benchmark_fps(graph, (1, 3, 32, 32), runs=2)
    with pytest.raises(ValueError):
        benchmark_fps(graph, (1, 3, 32, 32), runs=3, warmup=0)


# ------------------------------------------------------------------ training


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    return generate_synthetic_dataset(root, n_samples=8, h=32, w=32, num_classes=3, seed=1).samples()


def test_zero_lr_leaves_parameters(tiny_data):
    graph = build_segmenter(PRESETS["toy"], seed=0)
    before = {n: t.data.copy() for n, t in graph.named_parameters()}
    cfg = desk_config(total_steps=3, batch_size=2, crop=(32, 32), base_lr=0.0)
    train(graph, tiny_data, cfg)
    for n, t in graph.named_parameters():
        np.testing.assert_array_equal(t.data, before[n])
    assert any(np.any(bn.state.running_mean != 0) for _, bn in graph.batchnorms())


def test_training_is_reproducible(tiny_data):
    cfg = desk_config(total_steps=5, batch_size=2, crop=(32, 32), scales=(0.75, 1.0, 1.25))
    a = train(build_segmenter(PRESETS["toy"], seed=0), tiny_data, cfg).losses
    b = train(build_segmenter(PRESETS["toy"], seed=0), tiny_data, cfg).losses
    assert a == b


def test_single_sample_memorized():
    rng = np.random.default_rng(0)
    # 64x64 keeps a 2x2 map at the last BN; a 1x1 map with batch 1 normalizes to beta
    sample = Sample(rng.standard_normal((1, 3, 64, 64)).astype(np.float32), rng.integers(0, 3, (64, 64)))
    sample.label[:32] = 0
    cfg = desk_config(total_steps=200, batch_size=1, crop=(64, 64), mirror_prob=0.0)
    res = train(build_segmenter(PRESETS["toy"], seed=0), [sample], cfg)
    assert res.losses[-1] < res.losses[0]


def test_rejects_empty_dataset():
    with pytest.raises(ValueError):
        train(build_segmenter(PRESETS["toy"], seed=0), [], desk_config(total_steps=1))


def test_loss_csv(tiny_data, tmp_path):
    cfg = desk_config(total_steps=3, batch_size=2, crop=(32, 32))
    res = train(build_segmenter(PRESETS["toy"], seed=0), tiny_data, cfg)
    path = tmp_path / "loss.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,lr,loss" and len(lines) == 4
    assert float(lines[1].split(",")[2]) == res.losses[0]


def test_evaluate_counts_every_pixel(tiny_data):
    graph = build_segmenter(PRESETS["toy"], seed=0)
    cm, res = evaluate(graph, tiny_data, 3, batch_size=3)
    assert cm.total == sum(s.label.size for s in tiny_data)
    assert 0 <= res.mean <= 1


# Equal-budget comparison: a deeper, narrower net and a shallower, wider net
# with matched conv-weight counts both fit the synthetic data.
DEEP = NetworkSpec((6, 12, 24), (2, 4, 2), num_classes=3, name="deep")
WIDE = NetworkSpec((8, 16, 36), (1, 1, 1), num_classes=3, name="wide")


def test_equal_budget_pair_is_matched():
    p = [count_exact(build_ndnet(s)).backbone_params for s in (DEEP, WIDE)]
    assert abs(p[0] - p[1]) / max(p) < 0.10
    assert DEEP.nominal_depth > WIDE.nominal_depth


@pytest.mark.slow
@pytest.mark.parametrize("spec", [DEEP, WIDE], ids=["deeper-narrower", "shallower-wider"])
def test_equal_budget_nets_both_fit(tmp_path_factory, spec):
    root = tmp_path_factory.mktemp("budget")
    data = generate_synthetic_dataset(root, n_samples=64, h=64, w=64, num_classes=3, seed=0).samples()
    res = train(build_segmenter(spec, seed=0), data, desk_config(total_steps=400))
    final = res.final_loss
    assert final < 0.2 * res.losses[0], (final, res.losses[0])


def test_exact_mean_is_fraction():
    res = miou(ConfusionMatrix(3).update(np.array([0, 1, 2, 2]), np.array([0, 1, 1, 2])))
    assert res.exact_mean == (Fraction(1) + Fraction(1, 2) + Fraction(1, 2)) / 3
