"""Acceptance suite: one test per shipping criterion.

Each test prints a single PASS/FAIL line (run with ``pytest -s`` to see
them). Criteria 7 and 8 share one desk-scale training of both estimators
via a module fixture; everything else runs in seconds.
"""

import hashlib
import math

import numpy as np
import pytest

from varsr import cli
from varsr.estimators import LossEstimator, evaluate, var_abs, varnorm_psi
from varsr.image_core import make_ilr, rgb_to_luminance, write_rgb_png
from varsr.metrics import psnr, ssim
from varsr.network import (
    backward,
    forward,
    forward_residual,
    init_model,
    receptive_field,
)
from varsr.synthetic import synthetic_rgb
from varsr.trainer import TrainingConfig, build_dataset, train

from test_metrics import psnr_ref, ssim_ref
from test_network import influence_width_ref


def report(num, desc, ok):
    print(f"\n[ACCEPTANCE {num:02d}] {'PASS' if ok else 'FAIL'} - {desc}")
    assert ok, f"criterion {num} failed: {desc}"


# Desk-scale training shared by criteria 7 and 8. The criterion pins the
# image count/size, net shape, scale, epochs, learning rate, and batch
# size; patch layout (21 px, 128 per image), the clip threshold (0.001),
# and the seed are the implementation's documented choices.
DESK = dict(epochs=30, mini_batch=8, learning_rate=0.1, clip_theta=0.001,
            patch_size=21, per_image_count=128, seed=4)


@pytest.fixture(scope="module")
def desk_training():
    images = [synthetic_rgb(64, 64, seed=1000 + i) for i in range(16)]
    scenes = [synthetic_rgb(64, 64, seed=2000 + i) for i in range(5)]
    data = build_dataset(
        images, scales=(2,), patch_size=DESK["patch_size"],
        per_image_count=DESK["per_image_count"],
    )
    results = {}
    for est in (LossEstimator.mse(), LossEstimator.var_norm(0.1)):
        cfg = TrainingConfig(
            estimator=est, epochs=DESK["epochs"], mini_batch=DESK["mini_batch"],
            learning_rate=DESK["learning_rate"], clip_theta=DESK["clip_theta"],
            scales=(2,), patch_size=DESK["patch_size"], seed=DESK["seed"],
        )
        model, logs = train(init_model(4, 8, 3, seed=DESK["seed"]), data, cfg)
        results[est.kind] = (model, logs)
    return results, scenes


def test_criterion_01_varnorm_gradient_fidelity():
    rng = np.random.default_rng(101)
    eps = 1e-3  # the frozen-denominator loss is quadratic: FD is exact
    worst = 0.0
    for trial in range(50):
        rows = int(rng.integers(1, 17))
        cols = int(rng.integers(1, 17))
        f = rng.normal(0.0, 0.3, size=(rows, cols))
        r = (0.01, 0.1, 1.0)[trial % 3]
        ev = evaluate(LossEstimator.var_norm(r), f)
        s = ev.slope
        for idx in np.ndindex(f.shape):
            fp, fm = f.copy(), f.copy()
            fp[idx] += eps
            fm[idx] -= eps
            fd = (0.5 * s * np.sum(fp * fp) - 0.5 * s * np.sum(fm * fm)) / (2 * eps)
            rel = abs(ev.gradient[idx] - fd) / max(abs(fd), abs(ev.gradient[idx]), 1e-12)
            worst = max(worst, rel)
    hand = np.abs(
        varnorm_psi(np.array([[1.0, -1.0], [2.0, 0.0]]), 0.1)
        - np.array([[1.6667, -1.6667], [3.3333, 0.0]])
    ).max()
    report(1, f"var-norm gradient vs frozen-denominator FD (worst rel {worst:.2e}), "
              f"hand-computed psi (dev {hand:.2e})", worst <= 1e-6 and hand <= 1e-4)


def test_criterion_02_backprop_correctness():
    eps = 1e-5
    worst = 0.0
    for depth, filters in ((2, 2), (3, 4)):
        rng = np.random.default_rng(200 + depth)
        model = init_model(depth, filters, 3, seed=200 + depth)
        x = rng.uniform(0.1, 0.9, size=(1, 1, 8, 8))
        target = rng.uniform(-0.2, 0.2, size=x.shape)
        for est in (LossEstimator.mse(), LossEstimator.var_norm(0.1)):
            base = evaluate(est, forward(model, x) - target)
            slope = base.slope  # frozen for the var-norm FD pass

            def frozen_loss():
                f = forward(model, x) - target
                return 0.5 * slope * float(np.sum(f * f))

            grads = backward(model, x, base.gradient)
            for li, layer in enumerate(model.layers):
                for arr, g_arr in ((layer.weights, grads.weight_grads[li]),
                                   (layer.biases, grads.bias_grads[li])):
                    for idx in np.ndindex(arr.shape):
                        orig = arr[idx]
                        arr[idx] = orig + eps
                        lp = frozen_loss()
                        arr[idx] = orig - eps
                        lm = frozen_loss()
                        arr[idx] = orig
                        fd = (lp - lm) / (2 * eps)
                        rel = abs(g_arr[idx] - fd) / max(abs(fd), abs(g_arr[idx]), 1e-7)
                        worst = max(worst, rel)
    report(2, f"backprop vs central finite differences, both estimators "
              f"(worst rel {worst:.2e})", worst <= 1e-4)


def test_criterion_03_residual_identity(tmp_path):
    model = init_model(3, 4, 3, seed=1)
    for layer in model.layers:
        layer.weights[:] = 0.0
    rng = np.random.default_rng(301)
    ilr = rng.uniform(size=(1, 1, 32, 32))
    bit_exact = np.array_equal(forward(model, ilr), ilr)

    from varsr.network import save_model

    model_path = tmp_path / "zero.vsm"
    save_model(model_path, model)
    scene_dir = tmp_path / "scenes"
    scene_dir.mkdir()
    for i in range(3):
        write_rgb_png(scene_dir / f"s{i}.png", synthetic_rgb(48, 48, seed=310 + i))
    table = tmp_path / "table.tsv"
    rc = cli.main([
        "evaluate", "--model", f"zero={model_path}", "--scenes", str(scene_dir),
        "--scale", "2", "--out", str(table),
    ])
    rows = table.read_text().strip().splitlines()[1:]
    columns_agree = rc == 0 and all(r.split("\t")[1] == r.split("\t")[2] for r in rows)
    csv_rows = (tmp_path / "table.tsv.csv").read_text().strip().splitlines()[1:]
    by_scene = {}
    for line in csv_rows:
        scene, method, p, _ = line.split(",")
        by_scene.setdefault(scene, {})[method] = p
    psnr_exact = all(v["bicubic"] == v["zero"] for v in by_scene.values())
    report(3, "zero model reproduces the bicubic ILR bit-exactly; evaluate columns agree",
           bit_exact and columns_agree and psnr_exact)


def test_criterion_04_receptive_field_identity():
    reference = receptive_field(20, 3) == 41
    oracle = all(
        receptive_field(d, k) == influence_width_ref(d, k)
        for d in range(1, 6)
        for k in (3, 5)
    )
    report(4, "receptive_field(20, 3) = 41 and matches mask propagation for depth <= 5",
           reference and oracle)


def test_criterion_05_metric_oracles():
    rng = np.random.default_rng(501)
    a = rng.uniform(size=(32, 32))
    b = np.clip(a + rng.normal(0, 0.03, size=(32, 32)), 0, 1)
    psnr_dev = abs(psnr(a, b) - psnr_ref(a, b))
    derived = abs(psnr(np.zeros((8, 8)), np.full((8, 8), 10 / 255)) - 20 * math.log10(25.5))
    ssim_self = ssim(a, a) == 1.0
    ssim_dev = abs(ssim(a, b) - ssim_ref(a, b))
    report(5, f"PSNR formula dev {psnr_dev:.1e}, 28.131 dB case dev {derived:.1e}, "
              f"SSIM self=1.0, windowed-oracle dev {ssim_dev:.1e}",
           psnr_dev <= 1e-9 and derived <= 1e-9 and ssim_self and ssim_dev <= 1e-10)


def test_criterion_06_dataset_cardinality():
    images = [synthetic_rgb(227, 227, seed=600 + i) for i in range(10)]
    pairs = build_dataset(images, scales=(2, 3, 4), patch_size=41, per_image_count=6)
    per_scale = sum(1 for p in pairs if p.scale == 2)
    formula_ok = len(pairs) == 10 * 6 * 3 and per_scale == 10 * 6
    arithmetic_ok = 2_925 * 6 == 17_550 and 3_388 * 6 == 20_328
    report(6, f"cardinality |images|*count*|scales| holds ({len(pairs)} pairs, "
              f"{per_scale}/scale); corpus arithmetic 17,550 and 20,328 checks out",
           formula_ok and arithmetic_ok)


def test_criterion_07_toy_convergence(desk_training):
    results, _ = desk_training
    ratios = {}
    finite = True
    for kind, (model, logs) in results.items():
        ratios[kind] = logs[-1].loss / logs[0].loss
        finite &= all(
            np.isfinite(l.weights).all() and np.isfinite(l.biases).all()
            for l in model.layers
        )
    ok = all(r < 0.5 for r in ratios.values()) and finite
    report(7, "toy training halves the mean epoch loss for both estimators "
              + ", ".join(f"{k}: {r:.3f}" for k, r in sorted(ratios.items())), ok)


def test_toy_loss_moving_average_trend(desk_training):
    # Not a numbered criterion: the 5-epoch moving average of the mean loss
    # must be non-increasing once the window fills.
    results, _ = desk_training
    for kind, (_, logs) in results.items():
        losses = [l.loss for l in logs]
        ma = [float(np.mean(losses[i - 4 : i + 1])) for i in range(4, len(losses))]
        assert all(b <= a for a, b in zip(ma, ma[1:])), f"{kind} moving average rose"


def test_criterion_08_qualitative_ordering(desk_training):
    results, scenes = desk_training
    summary = []
    ok = True
    for kind, (model, _) in sorted(results.items()):
        wins = 0
        for scene in scenes:
            y = rgb_to_luminance(scene)
            ilr = make_ilr(y, 2)
            sr = np.clip(ilr + forward_residual(model, ilr[None, None])[0, 0], 0, 1)
            wins += psnr(y, sr) > psnr(y, ilr)
        summary.append(f"{kind}: {wins}/5")
        ok &= wins >= 4
    report(8, "trained nets beat the bicubic baseline on held-out scenes "
              + ", ".join(summary), ok)


def test_criterion_09_end_to_end_determinism(tmp_path):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    for i in range(4):
        write_rgb_png(img_dir / f"i{i}.png", synthetic_rgb(48, 48, seed=900 + i))
    scene_dir = tmp_path / "scenes"
    scene_dir.mkdir()
    for i in range(2):
        write_rgb_png(scene_dir / f"s{i}.png", synthetic_rgb(48, 48, seed=950 + i))

    def run(tag):
        data = tmp_path / f"{tag}.vsd"
        model = tmp_path / f"{tag}.vsm"
        table = tmp_path / f"{tag}.tsv"
        assert cli.main(["patchify", "--input-dir", str(img_dir), "--out", str(data),
                         "--patch-size", "24", "--count", "2", "--scales", "2"]) == 0
        assert cli.main(["train", "--data", str(data), "--out", str(model),
                         "--estimator", "var-norm", "--epochs", "2", "--batch", "4",
                         "--lr", "0.05", "--seed", "42", "--depth", "2", "--filters", "3"]) == 0
        assert cli.main(["evaluate", "--model", f"net={model}", "--scenes", str(scene_dir),
                         "--scale", "2", "--out", str(table)]) == 0
        digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
        return digest(data), digest(model), digest(table)

    ok = run("one") == run("two")
    report(9, "two seeded end-to-end runs produce byte-identical archives, models, tables", ok)


def test_criterion_10_estimator_collinearity():
    rng = np.random.default_rng(1001)
    model = init_model(3, 4, 3, seed=1001)
    x = rng.uniform(size=(8, 1, 21, 21))
    target = rng.uniform(-0.2, 0.2, size=x.shape)
    f = forward_residual(model, x) - target
    r = 0.1
    g_mse = evaluate(LossEstimator.mse(), f).gradient
    g_var = evaluate(LossEstimator.var_norm(r), f).gradient
    scalar = f.size / (r + var_abs(f))
    rel = np.abs(g_var - scalar * g_mse).max() / np.abs(g_var).max()
    report(10, f"var-norm gradient = N/(R + var(abs(F))) * MSE gradient (rel {rel:.2e})",
           rel <= 1e-10)
