"""m^n-DCNN architectures: declarative specs, parameter sets and the network.

A raw-waveform model is a strided convolution whose stride is
``input_len / m**n``, then ``n`` modules of (conv m, batch norm, ReLU,
max-pool m), then a width-1 convolution with dropout acting as the fully
connected layer, and a width-1 sigmoid output convolution.  Because the
modules shrink time by exactly ``m**n`` the last pool leaves one step.  The
mel-spectrogram family drops the strided convolution and takes
``n_mels x m**n`` frames instead.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import nn
from .errors import ConfigError, ShapeError, StateError

FAMILIES = ("mel_frame", "raw_frame", "raw_sample")
LAYER_KINDS = ("StridedConv", "ConvBlock", "FinalConv", "OutputDense")

# (m, input samples, n): the two input sizes of every row of the m^n grid
MN_GRID = (
    [(2, 16384, n) for n in range(6, 14)] + [(2, 32768, n) for n in range(7, 15)]
    + [(3, 19683, n) for n in range(3, 9)] + [(3, 59049, n) for n in range(4, 10)]
    + [(4, 16384, n) for n in range(3, 7)] + [(4, 65536, n) for n in range(4, 8)]
    + [(5, 15625, n) for n in range(3, 6)] + [(5, 78125, n) for n in range(4, 7)]
)

# (family, n, window, hop) for 59049-sample inputs
FRONTEND_GRID = (
    [("mel_frame", 4, 729, 729), ("mel_frame", 5, 729, 243), ("mel_frame", 5, 243, 243),
     ("mel_frame", 6, 243, 81), ("mel_frame", 6, 81, 81)]
    + [("raw_frame", 4, 729, 729), ("raw_frame", 5, 729, 243), ("raw_frame", 5, 243, 243),
       ("raw_frame", 6, 243, 81), ("raw_frame", 6, 81, 81)]
    + [("raw_sample", 7, 27, 27), ("raw_sample", 8, 9, 9), ("raw_sample", 9, 3, 3)]
)


def default_channels(n):
    """Channel schedule for ``n`` modules following the 3^9 layout.

    The first ``n // 3 - 1`` modules get 128 filters, the last one 512, and
    everything in between 256; for n = 9 this is [128]*2 + [256]*6 + [512].
    """
    n_low = max(n // 3 - 1, 0)
    if n == 1:
        return (512,)
    return (128,) * n_low + (256,) * (n - 1 - n_low) + (512,)


@dataclass(frozen=True)
class ModelSpec:
    family: str = "raw_sample"
    m: int = 3
    n: int = 9
    input_len: int = 59049
    first_filter_len: Optional[int] = None
    first_stride: Optional[int] = None
    channels: Optional[tuple] = None
    first_channels: Optional[int] = None
    final_channels: Optional[int] = None
    n_tags: int = 50
    dropout: float = 0.5
    in_channels: Optional[int] = None
    bn_position: str = "pre_relu"

    def __post_init__(self):
        s = object.__setattr__
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.m < 2 or self.n < 1:
            raise ConfigError(f"need m >= 2 and n >= 1, got m={self.m}, n={self.n}")
        if self.bn_position not in ("pre_relu", "post_relu"):
            raise ConfigError(f"bn_position must be pre_relu or post_relu, got {self.bn_position!r}")
        if not 0.0 <= self.dropout < 1.0 or self.n_tags < 1:
            raise ConfigError("need 0 <= dropout < 1 and n_tags >= 1")
        span = self.m ** self.n
        channels = tuple(int(c) for c in (self.channels or default_channels(self.n)))
        if len(channels) != self.n:
            raise ConfigError(f"channel schedule has {len(channels)} entries, expected n={self.n}")
        s(self, "channels", channels)
        if self.final_channels is None:
            s(self, "final_channels", channels[-1])
        if self.family == "mel_frame":
            if self.in_channels is None:
                s(self, "in_channels", 128)
            if self.input_len != span:
                raise ConfigError(
                    f"mel model input of {self.input_len} frames must equal m**n = {span}")
            s(self, "first_stride", None)
            s(self, "first_filter_len", None)
            s(self, "first_channels", None)
            return
        if self.in_channels is None:
            s(self, "in_channels", 1)
        if self.first_stride is None:
            s(self, "first_stride", max(self.input_len // span, 1))
        if self.first_filter_len is None:
            s(self, "first_filter_len", self.first_stride)
        if self.first_channels is None:
            s(self, "first_channels", channels[0])
        if self.input_len != self.first_stride * span:
            raise ConfigError(
                f"input_len {self.input_len} != first_stride {self.first_stride} x "
                f"{self.m}**{self.n} = {self.first_stride * span}")
        if self.first_filter_len < 1:
            raise ConfigError("first_filter_len must be positive")

    @property
    def is_raw(self):
        return self.family != "mel_frame"

    @property
    def frames(self):
        """Time steps entering the first module."""
        return self.m ** self.n

    @property
    def input_shape(self):
        return (self.in_channels, self.input_len)

    def to_dict(self):
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("channels") is not None:
            d["channels"] = tuple(d["channels"])
        return cls(**d)


def parse_shorthand(text, input_len=None, **overrides):
    """Expand ``"3^9"`` into a raw sample-level spec (input defaults to 3 * 3**9)."""
    try:
        m_str, n_str = text.replace("**", "^").split("^")
        m, n = int(m_str), int(n_str)
    except ValueError:
        raise ConfigError(f"model shorthand must look like 'm^n', got {text!r}") from None
    if input_len is None:
        input_len = m * m ** n
    return ModelSpec(m=m, n=n, input_len=input_len, **overrides)


def mn_grid_specs(**overrides):
    return [ModelSpec(family="raw_sample", m=m, n=n, input_len=inp, **overrides)
            for m, inp, n in MN_GRID]


def frontend_specs(**overrides):
    """``(spec, window, hop)`` for each window/hop row; mel rows take 59049 / hop frames."""
    out = []
    for family, n, window, hop in FRONTEND_GRID:
        if family == "mel_frame":
            spec = ModelSpec(family=family, m=3, n=n, input_len=59049 // hop, **overrides)
        else:
            spec = ModelSpec(family=family, m=3, n=n, input_len=59049, first_stride=hop,
                             first_filter_len=window, **overrides)
        out.append((spec, window, hop))
    return out


# --------------------------------------------------------------------------
# layers


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    filter_len: int
    stride: int = 1
    pool_len: int = 1
    dropout: float = 0.0
    in_time: int = 0
    out_time: int = 0  # after pooling

    @property
    def has_bn(self):
        return self.kind != "OutputDense"

    @property
    def n_params(self):
        return self.out_channels * self.in_channels * self.filter_len + self.out_channels


def layer_specs(spec: ModelSpec):
    layers = []
    t = spec.input_len
    c = spec.in_channels
    if spec.is_raw:
        out_t = -(-t // spec.first_stride)
        layers.append(LayerSpec("StridedConv", c, spec.first_channels, spec.first_filter_len,
                                stride=spec.first_stride, in_time=t, out_time=out_t))
        t, c = out_t, spec.first_channels
    for ch in spec.channels:
        layers.append(LayerSpec("ConvBlock", c, ch, spec.m, pool_len=spec.m, in_time=t,
                                out_time=t // spec.m))
        t, c = t // spec.m, ch
    if t != 1:
        raise ConfigError(f"temporal length after the last pool is {t}, expected 1")
    layers.append(LayerSpec("FinalConv", c, spec.final_channels, 1, dropout=spec.dropout,
                            in_time=1, out_time=1))
    layers.append(LayerSpec("OutputDense", spec.final_channels, spec.n_tags, 1, in_time=1,
                            out_time=1))
    return layers


@dataclass
class LayerParams:
    conv: nn.ConvParams
    bn: Optional[nn.BatchNormParams] = None


@dataclass
class ParamSet:
    layers: list = field(default_factory=list)

    def learnable(self):
        """Trainable arrays in declaration order: per layer weight, bias[, gamma, beta]."""
        out = []
        for lp in self.layers:
            out += [lp.conv.weight, lp.conv.bias]
            if lp.bn is not None:
                out += [lp.bn.gamma, lp.bn.beta]
        return out

    def named_arrays(self):
        """Every stored array (running statistics included) with a stable name."""
        out = []
        for i, lp in enumerate(self.layers):
            out += [(f"{i}.weight", lp.conv.weight), (f"{i}.bias", lp.conv.bias)]
            if lp.bn is not None:
                out += [(f"{i}.gamma", lp.bn.gamma), (f"{i}.beta", lp.bn.beta),
                        (f"{i}.running_mean", lp.bn.running_mean),
                        (f"{i}.running_var", lp.bn.running_var)]
        return out

    def learnable_names(self):
        keep = ("weight", "bias", "gamma", "beta")
        return [name for name, _ in self.named_arrays() if name.split(".")[1] in keep]

    def copy(self):
        return self.astype(None)

    def astype(self, dtype):
        def cvt(a):
            return a.copy() if dtype is None else a.astype(dtype)
        layers = []
        for lp in self.layers:
            conv = replace(lp.conv, weight=cvt(lp.conv.weight), bias=cvt(lp.conv.bias))
            bn = None
            if lp.bn is not None:
                bn = replace(lp.bn, gamma=cvt(lp.bn.gamma), beta=cvt(lp.bn.beta),
                             running_mean=cvt(lp.bn.running_mean),
                             running_var=cvt(lp.bn.running_var))
            layers.append(LayerParams(conv, bn))
        return ParamSet(layers)


@dataclass
class ParamCount:
    per_layer: list
    total: int
    batchnorm: list
    batchnorm_total: int


def count_params(spec: ModelSpec):
    """Convolution weight + bias counts per layer; batch-norm scale/shift reported apart."""
    layers = layer_specs(spec)
    per_layer = [ls.n_params for ls in layers]
    bn = [2 * ls.out_channels if ls.has_bn else 0 for ls in layers]
    return ParamCount(per_layer, sum(per_layer), bn, sum(bn))


def init_params(spec: ModelSpec, seed=0, dtype=np.float32):
    """Glorot-uniform conv weights, zero biases, identity batch norm."""
    rng = np.random.default_rng(seed)
    layers = []
    for ls in layer_specs(spec):
        fan_in, fan_out = ls.in_channels * ls.filter_len, ls.out_channels * ls.filter_len
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(ls.out_channels, ls.in_channels, ls.filter_len))
        conv = nn.ConvParams(w.astype(dtype), np.zeros(ls.out_channels, dtype), stride=ls.stride,
                             zero_pad=True)
        bn = nn.BatchNormParams.identity(ls.out_channels, dtype) if ls.has_bn else None
        layers.append(LayerParams(conv, bn))
    return ParamSet(layers)


def build_mn(spec: ModelSpec, seed=0, dtype=np.float32):
    """Return ``(layer_specs, params)`` for a validated spec."""
    return layer_specs(spec), init_params(spec, seed, dtype)


# --------------------------------------------------------------------------
# network


class Network:
    """Forward/backward driver over a :class:`ParamSet`.

    ``forward`` in training mode keeps the per-layer caches needed by
    ``backward``; an inference-mode forward clears them.
    """

    def __init__(self, spec: ModelSpec, params: Optional[ParamSet] = None, seed=0,
                 dtype=np.float32):
        self.spec = spec
        self.layers = layer_specs(spec)
        self.params = params if params is not None else init_params(spec, seed, dtype)
        if len(self.params.layers) != len(self.layers):
            raise ShapeError("parameter set does not match the model spec")
        self._cache = None

    @property
    def dtype(self):
        return self.params.layers[0].conv.weight.dtype

    # -- one layer --------------------------------------------------------

    def _layer_forward(self, i, x, train, rng, stop_at_activation=False):
        ls, lp = self.layers[i], self.params.layers[i]
        cache = {"x": x}
        h = nn.conv1d_forward(x, lp.conv)
        if ls.kind == "OutputDense":
            return h, cache
        if self.spec.bn_position == "pre_relu":
            h, cache["bn"] = nn.batchnorm_forward(h, lp.bn, train)
            cache["pre"] = h
            h = nn.relu(h)
        else:
            cache["pre"] = h
            h, cache["bn"] = nn.batchnorm_forward(nn.relu(h), lp.bn, train)
        if stop_at_activation:
            return h, cache
        if ls.pool_len > 1:
            h, cache["pool"] = nn.maxpool1d_forward(h, ls.pool_len)
        if ls.dropout > 0:
            h, cache["mask"] = nn.dropout(h, ls.dropout, train, rng)
        return h, cache

    def _layer_backward(self, i, dy, cache, from_activation=False):
        ls, lp = self.layers[i], self.params.layers[i]
        grads = []
        if ls.kind != "OutputDense":
            if not from_activation:
                if "mask" in cache:
                    dy = nn.dropout_backward(cache["mask"], dy)
                if "pool" in cache:
                    dy = nn.maxpool1d_backward(cache["pool"], dy, ls.pool_len)
            if self.spec.bn_position == "pre_relu":
                dy = nn.relu_backward(cache["pre"], dy)
                g_bn = nn.batchnorm_backward(cache["bn"], dy, lp.bn)
                dy = g_bn.x
            else:
                g_bn = nn.batchnorm_backward(cache["bn"], dy, lp.bn)
                dy = nn.relu_backward(cache["pre"], g_bn.x)
            grads = [g_bn.gamma, g_bn.beta]
        g = nn.conv1d_backward(cache["x"], lp.conv, dy)
        return g.x, [g.weight, g.bias] + grads

    # -- whole network ----------------------------------------------------

    def check_input(self, x):
        x = nn.as_batch(np.asarray(x, dtype=self.dtype))
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(f"input has shape {x.shape[1:]}, model expects {self.spec.input_shape}")
        return x

    def logits(self, x, train=False, rng=None):
        x = self.check_input(x)
        if train and rng is None:
            rng = np.random.default_rng(0)
        caches = []
        h = x
        for i in range(len(self.layers)):
            h, cache = self._layer_forward(i, h, train, rng)
            if train:
                caches.append(cache)
        self._cache = caches if train else None
        return h[:, :, 0]

    def forward(self, x, train=False, rng=None):
        """Per-clip tag probabilities, shape ``(batch, n_tags)``."""
        return nn.sigmoid(self.logits(x, train, rng))

    def backward(self, dlogits):
        """Gradients aligned with ``params.learnable()`` from d(loss)/d(logits)."""
        if self._cache is None:
            raise StateError("backward called without a preceding training-mode forward")
        dy = np.asarray(dlogits)[:, :, None]
        grads = []
        for i in reversed(range(len(self.layers))):
            dy, g = self._layer_backward(i, dy, self._cache[i])
            grads = g + grads
        self._cache = None
        self.input_grad = dy
        return grads

    def shapes(self, batch=1):
        """Run an inference forward on zeros, returning ``(kind, conv_out, pooled)`` shapes."""
        x = np.zeros((batch,) + self.spec.input_shape, dtype=self.dtype)
        rows = []
        for i, ls in enumerate(self.layers):
            act, _ = self._layer_forward(i, x, False, None, stop_at_activation=True)
            x, _ = self._layer_forward(i, x, False, None)
            rows.append((ls.kind, act.shape[1:], x.shape[1:]))
        return rows

    # -- activation maximisation support ------------------------------------

    def activation_and_input_grad(self, x, layer, filter_idx, objective="mean"):
        """One filter's activation (inference BN) and its gradient w.r.t. the input.

        ``objective="mean"`` averages the activation map over time;
        ``"center"`` takes the single unit at the middle time step.
        """
        x = nn.as_batch(np.asarray(x, dtype=self.dtype))
        if not 0 <= layer < len(self.layers) - 1:
            raise ConfigError(f"layer index {layer} out of range for visualisation")
        caches = []
        h = x
        for i in range(layer):
            h, c = self._layer_forward(i, h, False, None)
            caches.append(c)
        act, c_last = self._layer_forward(layer, h, False, None, stop_at_activation=True)
        if not 0 <= filter_idx < act.shape[1]:
            raise ConfigError(f"filter {filter_idx} out of range for layer {layer}")
        dy = np.zeros_like(act)
        if objective == "mean":
            value = act[:, filter_idx, :].mean(axis=-1)
            dy[:, filter_idx, :] = 1.0 / act.shape[2]
        elif objective == "center":
            mid = act.shape[2] // 2
            value = act[:, filter_idx, mid]
            dy[:, filter_idx, mid] = 1.0
        else:
            raise ConfigError(f"unknown objective {objective!r}")
        dy, _ = self._layer_backward(layer, dy, c_last, from_activation=True)
        for i in reversed(range(layer)):
            dy, _ = self._layer_backward(i, dy, caches[i])
        return value, dy
