"""Activation-maximisation filter estimates and their peak-sorted spectra."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .fft import n_onesided, rfft_magnitude

MAX_RETRIES = 3


@dataclass(frozen=True)
class VizConfig:
    layer: int = 0
    filters: Optional[tuple] = None
    input_len: int = 729
    steps: int = 100
    step_size: float = 0.1
    step_decay: float = 1.0
    seed: int = 0
    objective: str = "mean"


@dataclass
class FilterEstimate:
    layer: int
    filter_index: int
    waveform: np.ndarray
    trace: np.ndarray
    spectrum: np.ndarray
    peak_bin: int
    degenerate: bool = False


def _check(net, cfg: VizConfig):
    if not net.spec.is_raw:
        raise ConfigError("filter visualisation needs a raw-waveform model")
    if not 0 <= cfg.layer < len(net.layers) - 1:
        raise ConfigError(f"layer {cfg.layer} is not a convolution layer of this model")
    if cfg.input_len < net.layers[0].filter_len:
        raise ConfigError(f"input_len {cfg.input_len} is shorter than the first filter "
                          f"({net.layers[0].filter_len})")


def spectrum_of(waveform):
    spec = rfft_magnitude(waveform)
    return spec, int(np.argmax(spec))


def gradient_ascent(net, cfg: VizConfig, filter_index) -> FilterEstimate:
    """Grow unit-variance noise along the L2-normalised input gradient of one filter.

    The objective is the time-mean of the filter's activation map (or the
    single central unit with ``objective="center"``), evaluated with batch
    norm in inference mode.  ``trace[k]`` is the objective after
    ``k`` steps.  If the gradient vanishes at initialisation the noise is
    redrawn up to three times before the estimate is flagged degenerate.
    """
    _check(net, cfg)
    for attempt in range(MAX_RETRIES + 1):
        rng = np.random.default_rng([cfg.seed, cfg.layer, filter_index, attempt])
        x = rng.standard_normal((1, net.spec.in_channels, cfg.input_len)).astype(net.dtype)
        value, grad = net.activation_and_input_grad(x, cfg.layer, filter_index, cfg.objective)
        if np.linalg.norm(grad) > 0:
            break
    else:
        zero = np.zeros(cfg.input_len)
        return FilterEstimate(cfg.layer, filter_index, zero, np.zeros(1),
                              np.zeros(n_onesided(cfg.input_len)), 0, degenerate=True)
    trace = [float(value[0])]
    step = cfg.step_size
    for _ in range(cfg.steps):
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        x = x + (step / norm) * grad
        step *= cfg.step_decay
        value, grad = net.activation_and_input_grad(x, cfg.layer, filter_index, cfg.objective)
        trace.append(float(value[0]))
    waveform = x[0].mean(axis=0).astype(np.float64)
    spectrum, peak = spectrum_of(waveform)
    return FilterEstimate(cfg.layer, filter_index, waveform, np.array(trace), spectrum, peak)


def layer_spectra(net, cfg: VizConfig, threads=1):
    """One estimate per filter of ``cfg.layer``, sorted by spectral peak bin (stable)."""
    _check(net, cfg)
    n_out = net.layers[cfg.layer].out_channels
    filters = list(range(n_out)) if cfg.filters is None else list(cfg.filters)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            estimates = list(ex.map(lambda f: gradient_ascent(net, cfg, f), filters))
    else:
        estimates = [gradient_ascent(net, cfg, f) for f in filters]
    return sorted(estimates, key=lambda e: e.peak_bin)


def export_spectra(estimates, path, cfg: Optional[VizConfig] = None):
    """Write a bins x filters CSV plus a ``.json`` sidecar with the run metadata."""
    if not estimates:
        raise ValueError("no filter estimates to export")
    path = Path(path)
    matrix = np.stack([e.spectrum for e in estimates], axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"filter_{e.filter_index}" for e in estimates])
        for row in matrix:
            w.writerow([repr(float(v)) for v in row])
    meta = {
        "config": None if cfg is None else asdict(cfg),
        "layer": estimates[0].layer,
        "filters": [e.filter_index for e in estimates],
        "peak_bins": [e.peak_bin for e in estimates],
        "degenerate": [e.degenerate for e in estimates],
        "final_activation": [float(e.trace[-1]) for e in estimates],
    }
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2))
    return path, sidecar


def read_spectra(path):
    """Return ``(matrix, filter_indices)`` from an exported spectra CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    filters = [int(h.split("_")[1]) for h in header]
    return np.array(rows).reshape(-1, len(filters)), filters


def export_waveforms(estimates, directory):
    """Dump each estimate as raw little-endian float32 (``layerL_filterF.f32``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for e in estimates:
        p = directory / f"layer{e.layer}_filter{e.filter_index}.f32"
        e.waveform.astype("<f4").tofile(p)
        paths.append(p)
    return paths


def peak_histogram(estimates, n_bins, n_hist=16):
    peaks = np.array([e.peak_bin for e in estimates])
    hist, _ = np.histogram(peaks, bins=n_hist, range=(0, n_bins))
    return hist / max(hist.sum(), 1)


def js_divergence_to_uniform(hist):
    """Jensen-Shannon divergence (nats) between a histogram and the uniform one."""
    p = np.asarray(hist, dtype=np.float64)
    p = p / p.sum()
    q = np.full_like(p, 1.0 / p.size)
    mix = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / b[nz])))

    return 0.5 * kl(p, mix) + 0.5 * kl(q, mix)
