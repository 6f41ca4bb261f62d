"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import math
import time
from decimal import ROUND_HALF_UP, Decimal, localcontext

import numpy as np
import pytest

from layervsd.bench import bench_frames, run_bench
from layervsd.dataset import (
    SplitSpec,
    build_synthetic_dataset,
    dataset_to_csv,
    degrade,
    degrade_depth,
    derive_rng,
    load_dataset,
    save_dataset,
    split,
    synth_scene,
    to_arrays,
)
from layervsd.dibr import frame_mse, psnr, synthesize
from layervsd.geometry import VIEWS, depth_to_disparity
from layervsd.layers import fast_pipeline, full_pipeline
from layervsd.media_io import DEFAULT_RIG, CameraRig, StereoFrame
from layervsd.regressor import HyperParams, load_model, model_to_dict, save_model, train, train_linear

from conftest import frame_deltas, random_disparity_pair

X2_RMSE_THRESHOLD = 70.4  # twice the 35.2 measured on the run that fixed this protocol


def boundary_cases():
    """Hand-built (phi, phi_dec, rmax) triples around frame edges and level overlaps."""
    cases = []

    def row(phi, dec, rmax=6):
        cases.append((np.atleast_2d(phi), np.atleast_2d(dec), rmax))

    row(np.full((3, 8), 4), np.full((3, 8), 4))  # all-zero shift
    row([3] * 8, [1, 1, 3, 3, 3, 3, 3, 3])  # negative level touching column 0
    row([3] * 8, [3, 3, 3, 3, 3, 3, 5, 5])  # positive level touching the last column
    row([2] * 6, [5, 2, 2, 2, 2, 2], None)  # single pixel, +3 at column 0
    row([4] * 6, [4, 4, 4, 4, 4, 1], None)  # single pixel, -3 at the last column
    row([5] * 10, [4, 6, 3, 7, 5, 5, 6, 4, 7, 3])  # adjacent runs of different levels
    row(np.full((4, 6), 6), 6 + (np.indices((4, 6)).sum(axis=0) % 2) * 2 - 1)  # checkerboard of +-1
    row([0, 0, 0], [5, 0, 0], None)  # shift wider than the frame
    row(np.full((5, 1), 3), np.array([[1], [3], [5], [3], [2]]), None)  # one-column frame
    row([2] * 7, [1] * 7)  # uniform shift: zero spread keeps everything at level 0
    row([3] * 9, [12, 3, 3, 2, 3, 4, 3, 3, -6], 2)  # out-of-range shifts at both edges, clamped
    row(np.tile(np.arange(16), (2, 1)), np.tile(np.arange(16), (2, 1)) + np.array([[0, 1, -1, 2] * 4, [1, 0, -2, 0] * 4]))
    assert len(cases) == 12
    return cases


def test_criterion_1_fast_equals_full(criterion):
    with criterion("criterion 1 fast == full layer sets") as c:
        rng = np.random.default_rng(2024)
        inputs = []
        for k in range(200):
            if k % 2:
                phi, dec = random_disparity_pair(rng, 48, 64)
            else:
                depth = rng.choice([20, 60, 90, 150, 230], (48, 64)).astype(np.uint8)
                noisy = degrade_depth(depth, 2.0, 2, rng)
                phi = depth_to_disparity(depth, 200, 10, 100)
                dec = depth_to_disparity(noisy, 200, 10, 100)
            inputs.append((phi, dec, 6))
        inputs += boundary_cases()
        t0 = time.perf_counter()
        mismatches = 0
        for phi, dec, rmax in inputs:
            delta = np.asarray(dec) - np.asarray(phi)
            for view in VIEWS:
                if fast_pipeline(delta, view, rmax) != full_pipeline(delta, phi, dec, view, rmax):
                    mismatches += 1
        elapsed = time.perf_counter() - t0
        c.detail = f"{len(inputs)} frame pairs x 2 views, {mismatches} mismatches, {elapsed:.2f} s"
        assert mismatches == 0
        assert elapsed <= 5.0


ZERO_DISPARITY_RIG = CameraRig(1.0, 1.0, 1000.0, 1001.0, 0.5, 0.5)


def test_criterion_2_decomposition_identity(criterion):
    from layervsd.dataset import frame_features

    with criterion("criterion 2 VSD equals weighted S-VSD sum") as c:
        worst = 0.0
        for seed in range(50):
            orig = synth_scene(seed, 64, 48, rig=ZERO_DISPARITY_RIG)
            noisy = degrade(orig, 1 + seed % 7, seed)
            # keep the depth so the warp stays an exact one-to-one copy
            dec = StereoFrame(noisy.left_texture, orig.left_depth, noisy.right_texture, orig.right_depth)
            for f in (orig, dec):
                assert not depth_to_disparity(f.left_depth, 1.0, 1000.0, 1001.0).any()
            direct = frame_mse(synthesize(orig, ZERO_DISPARITY_RIG, weights=(1.0, 0.0)),
                               synthesize(dec, ZERO_DISPARITY_RIG, weights=(1.0, 0.0)))
            vec = frame_features(orig, dec, ZERO_DISPARITY_RIG, with_cardinality=True).values
            n = vec.size // 2
            L, C = vec[: n // 2], vec[n : n + n // 2]  # left-view half of each block
            total = float(np.sum(C * L))
            worst = max(worst, abs(direct - total) / max(direct, 1e-12))
        c.detail = f"50 scenes, worst relative gap {worst:.2e}"
        assert worst <= 1e-9


def test_criterion_3_zero_distortion(criterion):
    from layervsd.dataset import frame_features

    with criterion("criterion 3 zero distortion fixed point") as c:
        for seed in range(20):
            frame = synth_scene(seed, 96, 64)
            copy = StereoFrame(*(p.copy() for p in (frame.left_texture, frame.left_depth,
                                                     frame.right_texture, frame.right_depth)))
            assert frame_mse(synthesize(frame, DEFAULT_RIG), synthesize(copy, DEFAULT_RIG)) == 0.0
            assert not frame_features(frame, copy, DEFAULT_RIG, with_cardinality=False).values.any()
        c.detail = "20 seeds"


def test_criterion_4_regressor_quality(criterion):
    with criterion("criterion 4 boosted trees vs linear on synthetic data") as c:
        t0 = time.perf_counter()
        records = build_synthetic_dataset(scenes=30, frames=5, width=128, height=96, seed=0)
        t_build = time.perf_counter() - t0
        reps = []
        for train_set, test_set in split(records, SplitSpec(seed=0), stratify=lambda r: r.tag):
            Xtr, ytr = to_arrays(train_set)
            Xte, yte = to_arrays(test_set)
            gbt = train(Xtr, ytr).predict(Xte)
            lin = train_linear(Xtr, ytr).predict(Xte)
            pos = yte > 0
            rel = float(np.median(np.abs(gbt[pos] - yte[pos]) / yte[pos]))
            reps.append((rel, float(np.mean(np.abs(gbt - yte))), float(np.mean(np.abs(lin - yte)))))
        elapsed = time.perf_counter() - t0
        c.detail = (f"{len(records)} records, build {t_build:.1f} s, total {elapsed:.1f} s; "
                    + "; ".join(f"rep{i}: median rel {r:.3f}, dMSE gbt {g:.2f} / linear {l:.2f}"
                                for i, (r, g, l) in enumerate(reps)))
        assert len(records) >= 900
        assert all(r <= 0.15 for r, _, _ in reps)
        assert all(g < l for _, g, l in reps)
        assert elapsed <= 120.0


def test_criterion_5_regressor_oracles(criterion):
    with criterion("criterion 5 regressor unit oracles") as c:
        x = np.arange(64.0)
        held = np.arange(64) % 4 == 2
        model = train(x[~held, None], x[~held] ** 2, HyperParams(rounds=200, max_depth=4, early_stopping=0))
        rmse = float(np.sqrt(np.mean((model.predict(x[held, None]) - x[held] ** 2) ** 2)))

        X = np.random.default_rng(0).random((60, 4))
        const = train(X, np.full(60, 7.0), HyperParams(rounds=50))
        const_err = float(np.abs(const.predict(np.random.default_rng(1).random((100, 4))) - 7.0).max())

        rng = np.random.default_rng(2)
        Xm = rng.random((300, 3))
        ym = 40 * Xm[:, 0] ** 2 + 5 * Xm[:, 1] + 3
        hp = HyperParams(rounds=80, max_depth=4, subsample=1.0, colsample=1.0, early_stopping=0)
        losses = train(Xm, ym, hp).train_loss
        monotone = all(b <= a for a, b in zip(losses, losses[1:]))
        c.detail = (f"x^2 held-out RMSE {rmse:.2f} < {X2_RMSE_THRESHOLD}; constant target error {const_err:.1e}; "
                    f"loss non-increasing over {len(losses)} rounds: {monotone}")
        assert rmse < X2_RMSE_THRESHOLD
        assert const_err <= 1e-6
        assert monotone


def test_criterion_6_performance(criterion):
    with criterion("criterion 6 fast route speed and row-parallel identity") as c:
        pairs = bench_frames(1024, 768, 25, seed=0)
        rows = {(r.stage, r.mode): r for r in run_bench(pairs, stages=("fast_pipeline", "full_pipeline"))}
        fast = rows[("fast_pipeline", "single")].mean_seconds
        full = rows[("full_pipeline", "single")].mean_seconds
        identical = all(
            np.array_equal(synthesize(f, DEFAULT_RIG, threads=8), synthesize(f, DEFAULT_RIG))
            for pair in pairs[:5] for f in pair
        )
        c.detail = f"fast {fast * 1e3:.1f} ms vs full {full * 1e3:.1f} ms per frame (ratio {fast / full:.2f}); parallel identical: {identical}"
        assert fast < 0.5 * full
        assert identical


def decimal_disparity(d, fB, zn, zf):
    with localcontext() as ctx:
        ctx.prec = 80
        fB, zn, zf = Decimal(fB), Decimal(zn), Decimal(zf)
        v = fB * Decimal(d) / Decimal(255) * (Decimal(1) / zn - Decimal(1) / zf) + fB / zf
        return int(v.quantize(Decimal(1), rounding=ROUND_HALF_UP))


RIGS = [(1000, 10, 100), (50, 10, 100), (200, 10, 100), (37.5, 3, 250), (512, 42.5, 97)]


def test_criterion_7_disparity(criterion):
    with criterion("criterion 7a disparity against decimal evaluation") as c:
        depths = np.arange(256, dtype=np.uint8)
        bad = 0
        for fB, zn, zf in RIGS:
            ours = depth_to_disparity(depths, fB, zn, zf)
            bad += sum(int(ours[d]) != decimal_disparity(d, fB, zn, zf) for d in range(256))
        c.detail = f"{256 * len(RIGS)} values, {bad} mismatches"
        assert bad == 0


@pytest.mark.xfail(strict=True, reason="the reference MSE/PSNR pair is an average of per-frame values; "
                   "10*log10(255^2/6.4743) is 40.019 dB")
def test_criterion_7_psnr_pairing(criterion):
    with criterion("criterion 7b PSNR of 6.4743 within 0.001 dB of 41.4288") as c:
        value = psnr(6.4743)
        c.detail = f"got {value:.4f} dB"
        assert abs(value - 41.4288) <= 1e-3


def test_criterion_8_serialization(criterion, tmp_path):
    with criterion("criterion 8 model and dataset round trips") as c:
        records = build_synthetic_dataset(scenes=3, frames=2, levels=(1, 4, 7), width=64, height=48, seed=5)
        save_dataset(tmp_path / "d.csv", records)
        back = load_dataset(tmp_path / "d.csv")
        assert dataset_to_csv(back) == (tmp_path / "d.csv").read_text()
        assert all(np.array_equal(a.features, b.features) and a.target_vsd == b.target_vsd
                   for a, b in zip(records, back))
        X, y = to_arrays(records)
        model = train(X, y, HyperParams(rounds=60))
        save_model(tmp_path / "m.json", model)
        loaded = load_model(tmp_path / "m.json")
        assert model_to_dict(loaded) == model_to_dict(model)
        probe = derive_rng(5, "probe").random((100, X.shape[1])) * (X.max(axis=0) + 1)
        same = np.array_equal(model.predict(probe), loaded.predict(probe))
        c.detail = f"{len(records)} records, {len(model.trees)} trees, 100 probe vectors identical: {same}"
        assert same
