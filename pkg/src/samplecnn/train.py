"""Mini-batch SGD training with validation-driven learning-rate decay."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import dsp, nn
from .errors import ConfigError, DataError, NumericalError
from .evaluate import predict_songs, tile_starts

log = logging.getLogger(__name__)

CONTINUE, DECAY, STOP = "continue", "decay", "stop"
LOG_FIELDS = ["epoch", "train_loss", "val_loss", "lr", "decays"]


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    lr_factor: float = 5.0
    patience_epochs: int = 3
    max_decays: int = 4
    batch_size: int = 23
    dropout: float = 0.5
    seed: int = 0
    max_epochs: int = 1000

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        if not self.lr_factor > 1:
            raise ConfigError("lr_factor must exceed 1")
        if self.patience_epochs < 1 or self.max_decays < 0 or self.batch_size < 1:
            raise ConfigError("need patience_epochs >= 1, max_decays >= 0, batch_size >= 1")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")


@dataclass
class TrainState:
    lr0: Fraction
    lr_factor: Fraction
    decays_done: int = 0
    best_val_loss: float = float("inf")
    epochs_since_improve: int = 0
    epoch: int = 0
    velocities: list = field(default_factory=list)
    rng: Optional[np.random.Generator] = None

    @classmethod
    def initial(cls, cfg: TrainConfig, params):
        return cls(Fraction(str(cfg.lr0)), Fraction(str(cfg.lr_factor)),
                   velocities=[np.zeros_like(a) for a in params.learnable()],
                   rng=np.random.default_rng(cfg.seed))

    @property
    def exact_lr(self):
        return self.lr0 / self.lr_factor ** self.decays_done

    @property
    def current_lr(self):
        return float(self.exact_lr)

    def scalars(self):
        return {"lr0": str(self.lr0), "lr_factor": str(self.lr_factor),
                "decays_done": self.decays_done, "best_val_loss": self.best_val_loss,
                "epochs_since_improve": self.epochs_since_improve, "epoch": self.epoch,
                "rng": None if self.rng is None else self.rng.bit_generator.state}

    @classmethod
    def from_scalars(cls, d, velocities):
        rng = None
        if d.get("rng") is not None:
            rng = np.random.default_rng()
            rng.bit_generator.state = d["rng"]
        return cls(Fraction(d["lr0"]), Fraction(d["lr_factor"]), d["decays_done"],
                   float(d["best_val_loss"]), d["epochs_since_improve"], d["epoch"],
                   velocities, rng)


@dataclass
class Dataset:
    """One split: a ``(channels, time)`` input per clip plus its tag bits."""
    inputs: list
    tags: np.ndarray
    ids: list

    def __len__(self):
        return len(self.inputs)


@dataclass(frozen=True)
class Segment:
    clip: int
    start: int
    length: int


# --------------------------------------------------------------------------
# inputs


def raw_inputs(clips):
    """Raw waveforms as (1, samples) float32; deliberately no normalisation."""
    return [np.asarray(c.samples, dtype=np.float32)[None, :] for c in clips]


def mel_inputs(clips, stft_cfg, n_mels=128, C=10.0):
    return [dsp.melspectrogram(c, stft_cfg, n_mels=n_mels, C=C).data for c in clips]


def build_splits(spec, clips, entries, stft_cfg=None, n_mels=None, C=10.0, norm=None):
    """Group clips by manifest split and turn them into model inputs.

    Mel models get spectrograms normalised with statistics pooled over the
    training split (or with ``norm`` when given, e.g. at evaluation time),
    which are returned alongside; raw models get the samples untouched and
    ``None`` statistics.
    """
    if spec.is_raw:
        inputs = raw_inputs(clips)
        norm = None
    else:
        if stft_cfg is None:
            raise ConfigError("mel models need an STFT configuration")
        inputs = mel_inputs(clips, stft_cfg, n_mels or spec.in_channels, C)
        if norm is None:
            norm = dsp.fit_norm([x for x, e in zip(inputs, entries) if e.split == "train"])
        inputs = [dsp.apply_norm(x, norm).data.astype(np.float32) for x in inputs]
    splits = {}
    for name in ("train", "valid", "test"):
        idx = [i for i, e in enumerate(entries) if e.split == name]
        splits[name] = Dataset([inputs[i] for i in idx],
                               np.array([entries[i].tags for i in idx], dtype=np.int64)
                               .reshape(len(idx), -1),
                               [entries[i].clip_path for i in idx])
    return splits, norm


# --------------------------------------------------------------------------
# segments


def sample_segments(data: Dataset, input_len, rng=None, train=True):
    """Training: one random crop per clip, shuffled.  Otherwise: tiles in order."""
    out = []
    for ci, x in enumerate(data.inputs):
        length = x.shape[-1]
        if length < input_len:
            raise DataError(f"clip {data.ids[ci]!r} has length {length} < model input {input_len}")
        if train:
            start = int(rng.integers(0, length - input_len + 1))
            out.append((Segment(ci, start, input_len), data.tags[ci]))
        else:
            out += [(Segment(ci, s, input_len), data.tags[ci]) for s in tile_starts(length, input_len)]
    if train:
        out = [out[i] for i in rng.permutation(len(out))]
    return out


def _stack(data, segments):
    return np.stack([data.inputs[s.clip][:, s.start:s.start + s.length] for s in segments])


# --------------------------------------------------------------------------
# epochs and schedule


def train_epoch(net, state: TrainState, data: Dataset, cfg: TrainConfig):
    """One pass of random segments; returns the mean training BCE."""
    segs = sample_segments(data, net.spec.input_len, state.rng, train=True)
    params = net.params.learnable()
    lr = state.current_lr
    losses = []
    for bi, start in enumerate(range(0, len(segs), cfg.batch_size)):
        chunk = segs[start:start + cfg.batch_size]
        x = _stack(data, [s for s, _ in chunk])
        y = np.stack([t for _, t in chunk])
        probs = net.forward(x, train=True, rng=state.rng)
        loss, dlogits = nn.bce_loss(probs, y)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at epoch {state.epoch}, batch {bi}")
        grads = net.backward(dlogits)
        nn.nesterov_step(params, grads, state.velocities, lr, cfg.momentum)
        losses.append(loss * len(chunk))
    state.epoch += 1
    return float(sum(losses) / len(segs))


def validate(net, data: Dataset, batch_size=64):
    """BCE of tile-averaged clip predictions in inference mode."""
    if len(data) == 0:
        raise ConfigError("validation split is empty")
    table = predict_songs(net, data, batch_size)
    loss, _ = nn.bce_loss(table.scores, table.labels)
    return loss


def schedule_step(state: TrainState, val_loss, cfg: TrainConfig):
    """Advance the plateau schedule; returns ``(action, improved)``.

    Only a strict improvement on the best loss so far resets patience.  Once
    ``patience_epochs`` epochs pass without one, the rate drops by
    ``lr_factor``; after ``max_decays`` drops the next exhausted patience stops
    training.
    """
    if val_loss < state.best_val_loss:
        state.best_val_loss = float(val_loss)
        state.epochs_since_improve = 0
        return CONTINUE, True
    state.epochs_since_improve += 1
    if state.epochs_since_improve < cfg.patience_epochs:
        return CONTINUE, False
    if state.decays_done >= cfg.max_decays:
        return STOP, False
    state.decays_done += 1
    state.epochs_since_improve = 0
    return DECAY, False


@dataclass
class TrainResult:
    best_params: object
    best_val_loss: float
    history: list
    state: TrainState


def fit(net, train_data, valid_data, cfg: TrainConfig, log_path=None, on_improve=None,
        state=None):
    """Train until the schedule says stop or ``max_epochs`` is reached.

    ``on_improve(net, state)`` is called whenever validation loss hits a new
    best (the CLI writes the best checkpoint there).  The metrics CSV is
    appended to after every epoch so a crash leaves the partial log.
    """
    state = state or TrainState.initial(cfg, net.params)
    history = []
    best = net.params.copy()
    if log_path is not None:
        log_path = Path(log_path)
        with open(log_path, "w", newline="") as fh:
            csv.writer(fh).writerow(LOG_FIELDS)
    while state.epoch < cfg.max_epochs:
        lr, decays = state.current_lr, state.decays_done
        train_loss = train_epoch(net, state, train_data, cfg)
        val_loss = validate(net, valid_data)
        action, improved = schedule_step(state, val_loss, cfg)
        row = {"epoch": state.epoch, "train_loss": train_loss, "val_loss": val_loss,
               "lr": lr, "decays": decays}
        history.append(row)
        if log_path is not None:
            with open(log_path, "a", newline="") as fh:
                csv.writer(fh).writerow([row[k] for k in LOG_FIELDS])
        log.info("epoch %d train %.5f val %.5f lr %g", state.epoch, train_loss, val_loss, lr)
        if improved:
            best = net.params.copy()
            if on_improve is not None:
                on_improve(net, state)
        if action == STOP:
            break
    return TrainResult(best, state.best_val_loss, history, state)
