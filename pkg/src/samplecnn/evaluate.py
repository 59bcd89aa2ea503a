"""Song-level prediction and ROC AUC for multi-label tagging."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DataError, SampleCNNError


class EvalError(SampleCNNError):
    exit_code = 1


@dataclass
class PredictionTable:
    clip_ids: list
    scores: np.ndarray  # (clips, tags)
    labels: np.ndarray  # (clips, tags), 0/1

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 2:
            raise ValueError("scores and labels must be equal-shape 2-D arrays")
        if len(self.clip_ids) != self.scores.shape[0]:
            raise ValueError("one clip id per row is required")
        if np.any((self.scores < 0) | (self.scores > 1)):
            raise ValueError("scores must be probabilities in [0, 1]")

    @property
    def n_tags(self):
        return self.scores.shape[1]


def tile_starts(length, input_len):
    """Non-overlapping tiles covering a clip; a trailing partial tile is dropped."""
    if length < input_len:
        raise DataError(f"clip of length {length} is shorter than the model input ({input_len})")
    return list(range(0, (length // input_len) * input_len, input_len))


def predict_songs(net, data, batch_size=64):
    """Average inference-mode predictions over each clip's tiles."""
    if len(data) == 0:
        raise ConfigError("cannot predict on an empty split")
    input_len = net.spec.input_len
    tiles, owner = [], []
    for ci, x in enumerate(data.inputs):
        for s in tile_starts(x.shape[-1], input_len):
            tiles.append((ci, s))
            owner.append(ci)
    owner = np.asarray(owner)
    tile_scores = np.empty((len(tiles), net.spec.n_tags))
    for b in range(0, len(tiles), batch_size):
        chunk = tiles[b:b + batch_size]
        batch = np.stack([data.inputs[ci][:, s:s + input_len] for ci, s in chunk])
        tile_scores[b:b + len(chunk)] = net.forward(batch, train=False)
    sums = np.zeros((len(data), net.spec.n_tags))
    np.add.at(sums, owner, tile_scores)
    counts = np.bincount(owner, minlength=len(data))
    return PredictionTable(list(data.ids), sums / counts[:, None], data.tags)


def auc_per_tag(scores, labels):
    """Mann-Whitney AUC with ties counted as one half; NaN if only one class is present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def tag_aucs(table: PredictionTable):
    return np.array([auc_per_tag(table.scores[:, k], table.labels[:, k])
                     for k in range(table.n_tags)])


def mean_auc(table: PredictionTable, average="macro"):
    """Unweighted mean AUC over tags with both classes present.

    ``average="global"`` pools every (clip, tag) cell into one ranking instead.
    """
    if average == "global":
        value = auc_per_tag(table.scores.ravel(), table.labels.ravel())
        if np.isnan(value):
            raise EvalError("pooled labels contain a single class")
        return value
    if average != "macro":
        raise ConfigError(f"average must be 'macro' or 'global', got {average!r}")
    aucs = tag_aucs(table)
    valid = ~np.isnan(aucs)
    if not valid.any():
        raise EvalError("no tag has both positive and negative examples")
    if not valid.all():
        warnings.warn(f"{int((~valid).sum())} single-class tag(s) excluded from mean AUC",
                      RuntimeWarning, stacklevel=2)
    return float(aucs[valid].mean())


def write_predictions(table: PredictionTable, path):
    n = table.n_tags
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id"] + [f"score_{k}" for k in range(n)] + [f"label_{k}" for k in range(n)])
        for cid, s, y in zip(table.clip_ids, table.scores, table.labels):
            w.writerow([cid] + [repr(float(v)) for v in s] + [int(v) for v in y])


def read_predictions(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = (len(header) - 1) // 2
        ids, scores, labels = [], [], []
        for row in reader:
            ids.append(row[0])
            scores.append([float(v) for v in row[1:1 + n]])
            labels.append([int(v) for v in row[1 + n:]])
    return PredictionTable(ids, np.array(scores).reshape(-1, n), np.array(labels).reshape(-1, n))


def write_report(table: PredictionTable, path, average="macro"):
    """Per-tag AUC rows followed by a ``mean`` row; returns the mean."""
    aucs = tag_aucs(table)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = mean_auc(table, average)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tag", "auc"])
        for k, a in enumerate(aucs):
            w.writerow([k, "" if np.isnan(a) else f"{a:.6f}"])
        w.writerow(["mean", f"{mean:.6f}"])
    return mean
