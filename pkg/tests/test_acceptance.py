"""Acceptance criteria 1-10, each at its pinned tolerance.

Run with pytest (a PASS/FAIL summary line per criterion is printed at the
end of the session) or directly with ``python tests/test_acceptance.py``.
"""

import functools
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import test_model as model_suite
import test_nn as nn_suite
from oracles import brute_dft, pair_count_auc
from samplecnn import audio, dsp, evaluate, nn, train, viz
from samplecnn.checkpoint import load_checkpoint, save_checkpoint
from samplecnn.model import ModelSpec, Network, count_params, mn_grid_specs
from samplecnn.train import STOP, TrainConfig, TrainState

RESULTS = {}


def record(number, title):
    """Decorator: run a criterion body, time it, and store PASS/FAIL with detail."""
    def wrap(fn):
        @functools.wraps(fn)
        def test(*args, **kwargs):
            t0 = time.perf_counter()
            RESULTS[number] = (False, title, 0.0, "did not finish")
            try:
                detail = fn(*args, **kwargs) or ""
            except Exception as exc:
                RESULTS[number] = (False, title, time.perf_counter() - t0,
                                   f"{type(exc).__name__}: {exc}")
                raise
            RESULTS[number] = (True, title, time.perf_counter() - t0, detail)
        return test
    return wrap


# 1 ------------------------------------------------------------------------
@record(1, "3^9 parameter counts")
def test_c01_param_counts():
    t0 = time.perf_counter()
    pc = count_params(ModelSpec(m=3, n=9, input_len=59049))
    elapsed = time.perf_counter() - t0
    assert pc.per_layer == model_suite.GOLDEN_COUNTS
    assert pc.total == 1_863_986
    assert elapsed < 1.0
    return f"total {pc.total}"


# 2 ------------------------------------------------------------------------
@record(2, "3^9 shapes and m^n grid forwards")
def test_c02_shapes():
    t0 = time.perf_counter()
    rows = Network(ModelSpec()).shapes()
    for (kind, act, pooled), (g_act, g_pool) in zip(rows, model_suite.GOLDEN_SHAPES):
        assert act == g_act[::-1] and pooled == g_pool[::-1], kind
    assert len(rows) == len(model_suite.GOLDEN_SHAPES)
    specs = mn_grid_specs()
    for spec in specs:
        net = Network(spec)
        out = net.forward(np.zeros((1,) + spec.input_shape, dtype=np.float32))
        assert out.shape == (1, 50) and np.all(np.isfinite(out)), spec
        assert net.shapes()[-2][2] == (spec.final_channels, 1)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120
    return f"{len(specs)} grid configurations, {elapsed:.1f}s"


# 3 ------------------------------------------------------------------------
@record(3, "finite-difference gradient suite")
def test_c03_gradients():
    t0 = time.perf_counter()
    n = 0
    for seed in range(20):
        for k, s, pad in [(3, 1, True), (3, 3, False), (2, 1, True), (3, 2, True)]:
            nn_suite.test_conv_gradients(seed, k, s, pad)
        nn_suite.test_maxpool_gradients(seed)
        nn_suite.test_batchnorm_gradients(seed, True)
        nn_suite.test_batchnorm_gradients(seed, False)
        nn_suite.test_pointwise_gradients(seed)
        nn_suite.test_bce_logit_gradient(seed)
        model_suite.test_end_to_end_gradients(seed)
        n += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 60
    return f"{n} instances per kernel and end-to-end, rel err < 1e-6, {elapsed:.1f}s"


# 4 ------------------------------------------------------------------------
@record(4, "learning-rate schedule trajectory")
def test_c04_schedule():
    cfg = TrainConfig()
    state = TrainState.initial(cfg, Network(model_suite.ModelSpec(n=3, input_len=81,
                                                                  channels=(4, 4, 4))).params)
    lrs = []
    for _ in range(1000):
        if not lrs or lrs[-1] != state.exact_lr:
            lrs.append(state.exact_lr)
        action, _ = train.schedule_step(state, 1.0, cfg)
        if action == STOP:
            break
    else:
        raise AssertionError("schedule never stopped")
    assert lrs == [Fraction("0.01"), Fraction("0.002"), Fraction("0.0004"), Fraction("0.00008"),
                   Fraction("0.000016")]
    assert [float(v) for v in lrs] == [0.01, 0.002, 0.0004, 0.00008, 0.000016]
    return " -> ".join(f"{float(v):g}" for v in lrs) + " -> stop"


# 5 ------------------------------------------------------------------------
def overfit_run(seed=0):
    clips, entries = audio.generate_synthetic(audio.SynthSpec(n_clips=16, seed=seed))
    spec = ModelSpec(m=3, n=3, input_len=729, channels=(16, 16, 32), n_tags=8, dropout=0.0)
    data = train.Dataset(train.raw_inputs(clips), np.array([e.tags for e in entries]),
                         [e.clip_path for e in entries])
    net = Network(spec, seed=seed)
    cfg = TrainConfig(lr0=0.1, batch_size=16, dropout=0.0, seed=seed)
    state = TrainState.initial(cfg, net.params)
    losses = []
    for _ in range(200):
        losses.append(train.train_epoch(net, state, data, cfg))
        if losses[-1] < 0.05:
            break
    return losses


@record(5, "overfit 16 clips with a 3^3 model")
def test_c05_overfit():
    t0 = time.perf_counter()
    a = overfit_run()
    b = overfit_run()
    elapsed = time.perf_counter() - t0
    assert a == b, "training is not deterministic under a fixed seed"
    assert a[-1] < 0.05 and len(a) <= 200
    assert elapsed < 300
    return f"train BCE {a[-1]:.4f} after {len(a)} epochs, {elapsed:.1f}s for two runs"


# 6 ------------------------------------------------------------------------
def learning_run(seed):
    clips, entries = audio.generate_synthetic(audio.SynthSpec(n_clips=1000, seed=seed))
    spec = ModelSpec(m=3, n=5, input_len=729, channels=(16, 16, 32, 32, 64), n_tags=8)
    splits, _ = train.build_splits(spec, clips, entries)
    net = Network(spec, seed=seed)
    res = train.fit(net, splits["train"], splits["valid"], TrainConfig(seed=seed, max_epochs=20))
    table = evaluate.predict_songs(Network(spec, res.best_params), splits["test"])
    return evaluate.mean_auc(table)


@record(6, "3^5 learns the 1000-clip tone-band corpus")
def test_c06_learning():
    t0 = time.perf_counter()
    aucs = [learning_run(seed) for seed in range(3)]
    elapsed = time.perf_counter() - t0
    assert sum(a > 0.95 for a in aucs) >= 2, aucs
    assert elapsed < 1800
    return "test AUC " + ", ".join(f"{a:.4f}" for a in aucs) + f", {elapsed:.0f}s"


# 7 ------------------------------------------------------------------------
@record(7, "STFT, log compression and mel bookkeeping")
def test_c07_dsp():
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (8, 27, 243, 729):
        cfg = dsp.StftConfig(n, n, "hann")
        x = rng.standard_normal(2 * n)
        mag = dsp.stft_magnitude(x, cfg)
        win = dsp.analysis_window(cfg)
        ref = np.stack([np.abs(brute_dft(x[i * n:(i + 1) * n] * win))[: n // 2 + 1]
                        for i in range(2)], axis=1)
        err = np.max(np.abs(mag - ref)) / np.max(ref)
        assert err < 1e-9, (n, err)
        worst = max(worst, err)
    assert abs(dsp.log_compress(0.9, 10) - np.log(10)) < 1e-12
    clip = audio.AudioClip(rng.standard_normal(59049) * 0.1, 22050)
    spec = dsp.melspectrogram(clip, dsp.StftConfig(729, 81), n_mels=128)
    assert spec.data.shape == (128, 729)
    return f"max STFT rel err {worst:.1e}; mel {spec.bands}x{spec.frames}"


# 8 ------------------------------------------------------------------------
@record(8, "rank AUC versus pair counting")
def test_c08_auc():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(2, 300))
        scores = rng.integers(0, 20, n) / 20.0
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        assert evaluate.auc_per_tag(scores, labels) == pair_count_auc(scores, labels)
    assert evaluate.auc_per_tag([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    return "100 tied instances exact; hand case 0.75"


# 9 ------------------------------------------------------------------------
@record(9, "checkpoint round trip is bit-identical")
def test_c09_checkpoint(tmp_path):
    clips, entries = audio.generate_synthetic(audio.SynthSpec(n_clips=60, seed=9))
    spec = ModelSpec(m=3, n=4, input_len=729, channels=(8, 8, 16, 16), n_tags=8)
    splits, _ = train.build_splits(spec, clips, entries)
    net = Network(spec, seed=9)
    res = train.fit(net, splits["train"], splits["valid"], TrainConfig(max_epochs=3))
    before = train.validate(net, splits["valid"])
    path = tmp_path / "tiny.ckpt"
    save_checkpoint(path, spec, net.params, res.state)
    ck = load_checkpoint(path, expect_spec=spec)
    after = train.validate(Network(ck.spec, ck.params), splits["valid"])
    assert before == after, (before, after)
    return f"validation loss {before!r} before and after"


# 10 -----------------------------------------------------------------------
@record(10, "visualisation properties")
def test_c10_viz():
    net = single_layer_net()
    for step in (0.4, 0.2, 0.1, 0.05):
        for f in range(4):
            est = viz.gradient_ascent(net, viz.VizConfig(steps=30, step_size=step, step_decay=0.5), f)
            assert est.degenerate or np.all(np.diff(est.trace) >= 0), (step, f)
    ests = viz.layer_spectra(net, viz.VizConfig(steps=10))
    peaks = [e.peak_bin for e in ests]
    assert peaks == sorted(peaks)
    net.params.layers[0].conv.weight[0, 0, :] = [1, 0, -1]
    target = int(np.argmax(np.abs(1 - np.exp(-2j * 2 * np.pi * np.arange(365) / 729))))
    est = viz.gradient_ascent(net, viz.VizConfig(steps=100, step_size=1e4, objective="center",
                                                 seed=1), 0)
    assert not est.degenerate and abs(est.peak_bin - target) <= 1, (est.peak_bin, target)
    return f"monotone traces; sorted peaks; known kernel peak {est.peak_bin} vs {target}"


def single_layer_net():
    spec = ModelSpec(m=3, n=6, input_len=729, first_stride=1, first_filter_len=3,
                     channels=(4,) * 6, n_tags=2)
    return Network(spec, seed=0, dtype=np.float64)


def summary_lines():
    lines = []
    for k in range(1, 11):
        if k not in RESULTS:
            lines.append(f"criterion {k:2d}: NOT RUN")
            continue
        ok, title, secs, detail = RESULTS[k]
        lines.append(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {title} ({secs:.1f}s) {detail}")
    return lines


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
