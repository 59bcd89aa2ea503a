"""Audio loading, resampling, trimming, manifests and the synthetic tone-band corpus."""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

from .errors import ManifestError, UnsupportedFormatError, WavFormatError

SPLITS = ("train", "valid", "test")
TAPS_PER_PHASE = 64
KAISER_BETA = 8.6


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains NaN or Inf samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def seconds(self):
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class ManifestEntry:
    clip_path: str
    split: str
    tags: tuple

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        object.__setattr__(self, "tags", tuple(int(t) for t in self.tags))
        if any(t not in (0, 1) for t in self.tags):
            raise ValueError("tags must be 0/1 bits")

    @property
    def tag_string(self):
        return "".join(str(t) for t in self.tags)


@dataclass(frozen=True)
class SynthSpec:
    n_clips: int = 1000
    clip_seconds: float = 0.5
    sample_rate_hz: int = 8000
    n_bands: int = 8
    noise_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clips < 1 or self.n_bands < 1:
            raise ValueError("n_clips and n_bands must be >= 1")
        if self.clip_seconds <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("clip_seconds and sample_rate_hz must be positive")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")
        if 0.45 * self.sample_rate_hz <= 100.0:
            raise ValueError("sample rate too low for the 100 Hz lower band edge")

    @property
    def n_samples(self):
        return int(round(self.clip_seconds * self.sample_rate_hz))


# --------------------------------------------------------------------------
# WAV i/o


def load_wav(path) -> AudioClip:
    """Decode a PCM WAV file to a mono clip with amplitudes in [-1, 1).

    Integer formats are divided by ``2**(bits - 1)``; stereo and wider
    layouts are averaged across channels.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] not in (b"RIFF", b"RIFX") or head[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported" in msg:
            raise UnsupportedFormatError(f"{path}: {msg}") from exc
        raise WavFormatError(f"{path}: {msg}") from exc
    except (EOFError, struct.error) as exc:
        raise WavFormatError(f"{path}: truncated file") from exc

    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-aligns 24-bit samples in int32, so one scale covers both
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise WavFormatError(f"{path}: no samples")
    return AudioClip(x, int(rate))


def write_wav(path, clip: AudioClip, subtype="float32"):
    """Write a clip as ``float32`` or 16-bit PCM WAV."""
    if subtype == "float32":
        data = clip.samples.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    wavfile.write(Path(path), clip.sample_rate_hz, data)


# --------------------------------------------------------------------------
# resampling and trimming


def _polyphase_filter(up, down):
    n_taps = TAPS_PER_PHASE * up + 1
    return firwin(n_taps, 0.9 / max(up, down), window=("kaiser", KAISER_BETA))


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Band-limited rate conversion with a Kaiser-windowed sinc polyphase filter."""
    if target_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    if target_hz == clip.sample_rate_hz:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz)
    g = gcd(target_hz, clip.sample_rate_hz)
    up, down = target_hz // g, clip.sample_rate_hz // g
    y = resample_poly(clip.samples, up, down, window=_polyphase_filter(up, down))
    n_out = int(round(len(clip) * target_hz / clip.sample_rate_hz))
    if y.shape[0] >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - y.shape[0])])
    return AudioClip(y, target_hz)


def trim_or_pad(clip: AudioClip, target_seconds: float, policy="center") -> AudioClip:
    """Cut a clip to ``round(target_seconds * rate)`` samples.

    Longer clips are trimmed according to ``policy`` (``center``, ``head``
    keeps the beginning, ``tail`` keeps the end); shorter clips get trailing
    zeros.
    """
    if target_seconds <= 0:
        raise ValueError("target_seconds must be positive")
    n = int(round(target_seconds * clip.sample_rate_hz))
    x = clip.samples
    if len(x) > n:
        if policy == "center":
            start = (len(x) - n) // 2
        elif policy == "head":
            start = 0
        elif policy == "tail":
            start = len(x) - n
        else:
            raise ValueError(f"unknown trim policy {policy!r}")
        x = x[start:start + n]
    elif len(x) < n:
        x = np.concatenate([x, np.zeros(n - len(x))])
    return AudioClip(x.copy(), clip.sample_rate_hz)


# --------------------------------------------------------------------------
# synthetic tone-band corpus


def band_edges(n_bands, sample_rate_hz):
    """Log-uniform partition of [100 Hz, 0.9 * Nyquist] into ``n_bands`` bands."""
    return np.geomspace(100.0, 0.45 * sample_rate_hz, n_bands + 1)


def tags_from_frequencies(freqs, edges):
    """Bit vector with bit k set iff some frequency lies in band k."""
    tags = np.zeros(len(edges) - 1, dtype=np.int64)
    for f in freqs:
        k = np.searchsorted(edges, f, side="right") - 1
        if 0 <= k < len(tags):
            tags[k] = 1
    return tags


def tone_mixture(freqs, amps, phases, n_samples, sample_rate_hz):
    t = np.arange(n_samples) / sample_rate_hz
    x = np.zeros(n_samples)
    for f, a, ph in zip(freqs, amps, phases):
        x += a * np.sin(2 * np.pi * f * t + ph)
    return x


def split_for_index(i, n):
    decile = (10 * i) // n
    return "train" if decile < 8 else ("valid" if decile < 9 else "test")


def generate_synthetic(spec: SynthSpec, margin=0.2):
    """Generate clips of 1-3 tones in distinct bands plus white noise.

    Tone frequencies are drawn log-uniformly from the central part of their
    band (``margin`` of the band's log-width is kept clear on each side) so
    that every tone is unambiguously inside one band.  Returns
    ``(clips, manifest_entries)``; entry paths are ``synth_NNNNN.wav``.
    """
    rng = np.random.default_rng(spec.seed)
    edges = band_edges(spec.n_bands, spec.sample_rate_hz)
    log_edges = np.log(edges)
    n = spec.n_samples
    clips, entries = [], []
    for i in range(spec.n_clips):
        n_tones = int(rng.integers(1, min(3, spec.n_bands) + 1))
        bands = rng.choice(spec.n_bands, size=n_tones, replace=False)
        lo, hi = log_edges[bands], log_edges[bands + 1]
        width = hi - lo
        freqs = np.exp(rng.uniform(lo + margin * width, hi - margin * width))
        amps = rng.uniform(0.1, 0.3, size=n_tones)
        phases = rng.uniform(0.0, 2 * np.pi, size=n_tones)
        x = tone_mixture(freqs, amps, phases, n, spec.sample_rate_hz)
        if spec.noise_level > 0:
            x = x + spec.noise_level * rng.standard_normal(n)
        tags = np.zeros(spec.n_bands, dtype=np.int64)
        tags[bands] = 1
        clips.append(AudioClip(x, spec.sample_rate_hz))
        entries.append(ManifestEntry(f"synth_{i:05d}.wav", split_for_index(i, spec.n_clips), tags))
    return clips, entries


# --------------------------------------------------------------------------
# manifests


def write_manifest(entries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "split", "tags"])
        for e in entries:
            w.writerow([e.clip_path, e.split, e.tag_string])


def read_manifest(path, n_tags=50):
    """Parse a manifest CSV (``path,split,tags``); ``n_tags=None`` skips the length check."""
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return entries
        if [h.strip() for h in header] != ["path", "split", "tags"]:
            raise ManifestError(f"{path}:1: expected header 'path,split,tags', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            clip_path, split, tags = (c.strip() for c in row)
            if split not in SPLITS:
                raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
            if not tags or set(tags) - {"0", "1"}:
                raise ManifestError(f"{path}:{lineno}: tags must be a 0/1 string")
            if n_tags is not None and len(tags) != n_tags:
                raise ManifestError(
                    f"{path}:{lineno}: tag string has {len(tags)} bits, vocabulary has {n_tags}"
                )
            entries.append(ManifestEntry(clip_path, split, tuple(int(c) for c in tags)))
    return entries
