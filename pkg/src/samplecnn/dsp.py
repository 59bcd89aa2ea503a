"""Mel-spectrogram frontend for the frame-level baseline.

STFT magnitudes go through an HTK-style triangular mel filterbank and the
``log(1 + C * A)`` amplitude compression, then a single global mean/std
normalisation fitted on the training set.  Raw-waveform models never pass
through here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from . import fft as _fft
from .errors import ConfigError, ShapeError

WINDOWS = ("hann", "rectangular")


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 729
    hop: int = 243
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size < 1 or self.hop < 1:
            raise ConfigError("fft_size and hop must be positive")
        if self.hop > self.fft_size:
            raise ConfigError(f"hop ({self.hop}) exceeds fft_size ({self.fft_size})")
        if self.window not in WINDOWS:
            raise ConfigError(f"window must be one of {WINDOWS}, got {self.window!r}")

    @property
    def n_bins(self):
        return _fft.n_onesided(self.fft_size)


@dataclass
class Spectrogram:
    data: np.ndarray  # (bands, frames)

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def frames(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ConfigError(f"normalisation std must be positive, got {self.std}")


def _samples(clip):
    return np.asarray(getattr(clip, "samples", clip), dtype=np.float64).reshape(-1)


def analysis_window(cfg: StftConfig):
    if cfg.window == "rectangular":
        return np.ones(cfg.fft_size)
    return get_window("hann", cfg.fft_size)


def frame_signal(x, frame_len, hop):
    n_frames = (len(x) - frame_len) // hop + 1
    idx = hop * np.arange(n_frames)[:, None] + np.arange(frame_len)[None, :]
    return x[idx]


def stft_magnitude(clip, cfg: StftConfig):
    """One-sided STFT magnitudes, shape ``(bins, frames)``; no padding."""
    x = _samples(clip)
    if len(x) < cfg.fft_size:
        raise ShapeError(f"signal of {len(x)} samples is shorter than one frame ({cfg.fft_size})")
    frames = frame_signal(x, cfg.fft_size, cfg.hop) * analysis_window(cfg)
    return _fft.rfft_magnitude(frames).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels, fmin, fmax):
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


def mel_filterbank(n_mels, fft_size, rate, fmin=0.0, fmax=None):
    """Triangular filters on the HTK mel scale, shape ``(n_mels, bins)``.

    Neighbouring triangles overlap by half in mel space and peak at 1 (no
    area normalisation).  A triangle narrow enough to fall between two FFT
    bins is replaced by a unit weight on the bin nearest its centre so no row
    is empty.
    """
    fmax = rate / 2.0 if fmax is None else fmax
    if n_mels < 1 or fft_size < 1 or rate <= 0:
        raise ConfigError("n_mels, fft_size and rate must be positive")
    if not 0.0 <= fmin < fmax <= rate / 2.0:
        raise ConfigError(f"need 0 <= fmin < fmax <= rate/2, got fmin={fmin}, fmax={fmax}")
    bin_hz = np.arange(_fft.n_onesided(fft_size)) * rate / fft_size
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (bin_hz - lo) / (mid - lo)
    falling = (hi - bin_hz) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    for i in np.flatnonzero(fb.sum(axis=1) <= 0):
        fb[i, np.argmin(np.abs(bin_hz - pts[i + 1]))] = 1.0
    return fb


def log_compress(x, C=10.0):
    x = np.asarray(x, dtype=np.float64)
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    if np.any(x < 0):
        raise ValueError("log_compress expects non-negative magnitudes")
    return np.log1p(C * x)


def melspectrogram(clip, cfg: StftConfig, n_mels=128, C=10.0, rate=None, fmin=0.0, fmax=None,
                   align_frames=True):
    """Log-compressed mel spectrogram of a clip, shape ``(n_mels, frames)``.

    With ``align_frames`` the signal is zero-padded at the tail by
    ``fft_size - hop`` samples so that the frame count is exactly
    ``len // hop`` (59049 samples at hop 81 give 729 frames).
    """
    x = _samples(clip)
    if rate is None:
        rate = clip.sample_rate_hz
    if align_frames and cfg.fft_size > cfg.hop:
        x = np.concatenate([x, np.zeros(cfg.fft_size - cfg.hop)])
    mag = stft_magnitude(x, cfg)
    fb = mel_filterbank(n_mels, cfg.fft_size, rate, fmin, fmax)
    return Spectrogram(log_compress(fb @ mag, C))


def fit_norm(spectrograms):
    """Mean and std pooled over every entry of every training spectrogram."""
    arrays = [np.asarray(getattr(s, "data", s), dtype=np.float64).ravel() for s in spectrograms]
    if not arrays:
        raise ConfigError("fit_norm needs at least one spectrogram")
    pooled = np.concatenate(arrays)
    std = float(pooled.std())
    if not std > 0:
        raise ConfigError("training spectrograms have zero variance")
    return NormStats(float(pooled.mean()), std)


def apply_norm(spec, stats: NormStats):
    data = getattr(spec, "data", spec)
    return Spectrogram((np.asarray(data, dtype=np.float64) - stats.mean) / stats.std)


def write_spectrogram_csv(spec, path):
    np.savetxt(path, getattr(spec, "data", spec), delimiter=",", fmt="%.17g")


def read_spectrogram_csv(path):
    return Spectrogram(np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64)))
