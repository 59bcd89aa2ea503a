"""Forward and hand-derived backward kernels for the 1D network.

Activations are numpy arrays of shape ``(batch, channels, time)``; a single
feature map of shape ``(channels, time)`` is accepted wherever a batch is and
treated as a batch of one.  Every kernel preserves the dtype of its inputs so
the same code runs in float32 for training and float64 for gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

PROB_CLAMP = 1e-7


def as_batch(x):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None]
    if x.ndim != 3:
        raise ShapeError(f"expected (channels, time) or (batch, channels, time), got {x.shape}")
    return x


# --------------------------------------------------------------------------
# parameter containers


@dataclass
class ConvParams:
    weight: np.ndarray  # (out_ch, in_ch, filter_len)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    zero_pad: bool = True

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def filter_len(self):
        return self.weight.shape[2]

    @property
    def n_params(self):
        return self.weight.size + self.bias.size


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.9

    @classmethod
    def identity(cls, channels, dtype=np.float32, **kw):
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype), **kw)

    @property
    def n_params(self):
        return self.gamma.size + self.beta.size


@dataclass
class ConvGrads:
    weight: np.ndarray
    bias: np.ndarray
    x: np.ndarray


@dataclass
class BatchNormGrads:
    gamma: np.ndarray
    beta: np.ndarray
    x: np.ndarray


# --------------------------------------------------------------------------
# convolution


def conv_padding(time, filter_len, stride, zero_pad):
    """Return ``(left, right, out_time)`` for a convolution.

    Zero padding is "same" style: the output has ``ceil(time / stride)``
    steps, the left side gets ``total // 2`` zeros and the right the rest.
    """
    if zero_pad:
        out = -(-time // stride)
        total = max((out - 1) * stride + filter_len - time, 0)
        return total // 2, total - total // 2, out
    if time < filter_len:
        raise ShapeError(f"input of length {time} is shorter than the filter ({filter_len})")
    return 0, 0, (time - filter_len) // stride + 1


def _windows(x, p):
    left, right, out = conv_padding(x.shape[2], p.filter_len, p.stride, p.zero_pad)
    xp = np.pad(x, ((0, 0), (0, 0), (left, right))) if left or right else x
    k, s = p.filter_len, p.stride
    if k == s:
        win = xp[:, :, : out * k].reshape(x.shape[0], x.shape[1], out, k)
    else:
        win = sliding_window_view(xp, k, axis=2)[:, :, ::s][:, :, :out]
    return win, left, xp.shape[2], out


def conv1d_forward(x, p: ConvParams):
    """``out[b, o, t] = bias[o] + sum_{i,k} w[o, i, k] * xpad[b, i, t*stride + k]``."""
    x = as_batch(x)
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"conv expects {p.in_channels} input channels, got {x.shape[1]}")
    win, _, _, _ = _windows(x, p)
    y = np.tensordot(win, p.weight, axes=([1, 3], [1, 2]))  # (B, out, O)
    return np.ascontiguousarray(y.transpose(0, 2, 1)) + p.bias[None, :, None]


def conv1d_backward(x, p: ConvParams, upstream):
    x = as_batch(x)
    upstream = as_batch(upstream)
    win, left, padded_len, out = _windows(x, p)
    expected = (x.shape[0], p.out_channels, out)
    if upstream.shape != expected:
        raise ShapeError(f"upstream gradient has shape {upstream.shape}, expected {expected}")
    db = upstream.sum(axis=(0, 2))
    dw = np.tensordot(upstream, win, axes=([0, 2], [0, 2]))  # (O, C, K)
    dwin = np.tensordot(upstream, p.weight, axes=([1], [0]))  # (B, out, C, K)
    b, c = x.shape[0], x.shape[1]
    k, s = p.filter_len, p.stride
    dxp = np.zeros((b, c, padded_len), dtype=np.result_type(x, upstream))
    if k == s:
        dxp[:, :, : out * k] = dwin.transpose(0, 2, 1, 3).reshape(b, c, out * k)
    else:
        dwin = dwin.transpose(0, 2, 1, 3)  # (B, C, out, K)
        stop = s * (out - 1) + 1
        for j in range(k):
            dxp[:, :, j:j + stop:s] += dwin[:, :, :, j]
    return ConvGrads(dw, db, dxp[:, :, left:left + x.shape[2]])


# --------------------------------------------------------------------------
# pooling


def maxpool1d_forward(x, pool_len):
    """Non-overlapping max pooling; ties resolve to the earliest index."""
    x = as_batch(x)
    b, c, t = x.shape
    if t % pool_len:
        raise ShapeError(f"time length {t} is not divisible by pool length {pool_len}")
    r = x.reshape(b, c, t // pool_len, pool_len)
    idx = r.argmax(axis=-1)
    return np.take_along_axis(r, idx[..., None], axis=-1)[..., 0], idx


def maxpool1d_backward(indices, upstream, pool_len):
    upstream = as_batch(upstream)
    if upstream.shape != indices.shape:
        raise ShapeError(f"upstream {upstream.shape} does not match pooled shape {indices.shape}")
    dx = np.zeros(indices.shape + (pool_len,), dtype=upstream.dtype)
    np.put_along_axis(dx, indices[..., None], upstream[..., None], axis=-1)
    return dx.reshape(indices.shape[0], indices.shape[1], -1)


# --------------------------------------------------------------------------
# batch normalisation


def batchnorm_forward(x, p: BatchNormParams, train=True):
    """Per-channel normalisation pooled over batch and time.

    In training mode the batch's population variance is used and the running
    statistics are updated in place with an exponential moving average.
    """
    x = as_batch(x)
    if x.shape[0] == 0:
        raise ShapeError("batch norm needs a non-empty batch")
    if x.shape[1] != p.gamma.shape[0]:
        raise ShapeError(f"batch norm has {p.gamma.shape[0]} channels, input has {x.shape[1]}")
    if train:
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        p.running_mean[...] = p.momentum * p.running_mean + (1.0 - p.momentum) * mean
        p.running_var[...] = p.momentum * p.running_var + (1.0 - p.momentum) * var
    else:
        mean, var = p.running_mean, p.running_var
    inv_std = (1.0 / np.sqrt(var + p.eps)).astype(x.dtype)
    xhat = (x - mean[None, :, None].astype(x.dtype)) * inv_std[None, :, None]
    y = p.gamma[None, :, None] * xhat + p.beta[None, :, None]
    return y, {"xhat": xhat, "inv_std": inv_std, "train": train}


def batchnorm_backward(cache, upstream, p: BatchNormParams):
    upstream = as_batch(upstream)
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    if upstream.shape != xhat.shape:
        raise ShapeError(f"upstream {upstream.shape} does not match activation {xhat.shape}")
    dbeta = upstream.sum(axis=(0, 2))
    dgamma = (upstream * xhat).sum(axis=(0, 2))
    dxhat = upstream * p.gamma[None, :, None]
    if cache["train"]:
        n = xhat.shape[0] * xhat.shape[2]
        dx = (inv_std[None, :, None] / n) * (
            n * dxhat
            - dxhat.sum(axis=(0, 2))[None, :, None]
            - xhat * (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
        )
    else:
        dx = dxhat * inv_std[None, :, None]
    return BatchNormGrads(dgamma, dbeta, dx)


# --------------------------------------------------------------------------
# pointwise


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    return upstream * (x > 0)


def sigmoid(x):
    x = np.asarray(x)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid_backward(s, upstream):
    return upstream * s * (1.0 - s)


def dropout(x, rate, train, rng):
    """Inverted dropout; returns ``(y, mask)`` where ``mask`` already holds the 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(mask, upstream):
    return upstream if mask is None else upstream * mask


# --------------------------------------------------------------------------
# loss and optimiser


def bce_loss(pred, target):
    """Mean binary cross entropy and its gradient w.r.t. the pre-sigmoid logits."""
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"predictions {pred.shape} and targets {target.shape} differ")
    p = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP).astype(np.float64)
    y = target.astype(np.float64)
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    grad = (pred - target) / pred.size
    return loss, grad


def nesterov_step(params, grads, velocities, lr, momentum):
    """In-place Nesterov momentum update on parallel lists of arrays.

    ``v <- momentum * v - lr * g``; ``theta <- theta + momentum * v - lr * g``.
    """
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must be in [0, 1), got {momentum}")
    if not len(params) == len(grads) == len(velocities):
        raise ShapeError("params, grads and velocities must have equal length")
    for theta, g, v in zip(params, grads, velocities):
        if theta.shape != g.shape or theta.shape != v.shape:
            raise ShapeError(f"shape mismatch: param {theta.shape}, grad {g.shape}, velocity {v.shape}")
        v[...] = momentum * v - lr * g
        theta[...] = theta + momentum * v - lr * g
    return params, velocities
