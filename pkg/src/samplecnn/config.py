"""Run configuration: typed dataclass sections stored as an INI document.

Precedence, lowest first: dataclass defaults, the config file, ``--set
section.key=value`` overrides, then dedicated command-line flags.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .model import ModelSpec
from .train import TrainConfig
from .viz import VizConfig


@dataclass(frozen=True)
class DataConfig:
    manifest: str = "data/manifest.csv"
    source_manifest: Optional[str] = None
    data_dir: str = "data"
    sample_rate: int = 22050
    clip_seconds: float = 29.1
    trim_policy: str = "center"
    synthetic: bool = False
    n_clips: int = 100
    n_bands: int = 8
    noise_level: float = 0.0
    synth_seed: int = 0


@dataclass(frozen=True)
class FrontendConfig:
    fft_size: int = 729
    hop: int = 243
    window: str = "hann"
    n_mels: int = 128
    log_c: float = 10.0


@dataclass(frozen=True)
class EvalConfig:
    average: str = "macro"
    batch_size: int = 64
    split: str = "test"


@dataclass(frozen=True)
class PathsConfig:
    checkpoint_dir: str = "runs/checkpoints"
    log_dir: str = "runs/logs"
    out_dir: str = "runs/out"


SECTIONS = {
    "data": DataConfig,
    "model": ModelSpec,
    "frontend": FrontendConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "viz": VizConfig,
    "paths": PathsConfig,
}


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    viz: VizConfig = field(default_factory=VizConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


def _resolve_hint(hint):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        return _resolve_hint(args[0])[0], True
    return hint, False


def _parse_value(text, hint, where):
    base, optional = _resolve_hint(hint)
    text = text.strip()
    if optional and text.lower() in ("", "none"):
        return None
    try:
        if base is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if base is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {base.__name__}") from None


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build_section(name, values):
    cls = SECTIONS[name]
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
    kwargs = {k: _parse_value(v, hints[k], f"[{name}] {k}") if isinstance(v, str) else v
              for k, v in values.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def parse_config(text, overrides=None):
    """Build a :class:`RunConfig` from INI text plus ``{"section.key": value}`` overrides."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    raw = {name: dict(cp[name]) if cp.has_section(name) else {} for name in SECTIONS}
    for key, value in (overrides or {}).items():
        if "." not in key:
            raise ConfigError(f"override {key!r} must be section.key")
        section, k = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        raw[section][k] = value
    return RunConfig(**{name: _build_section(name, raw[name]) for name in SECTIONS})


def load_config(path=None, overrides=None):
    text = "" if path is None else open(path).read()
    return parse_config(text, overrides)


def dump_config(cfg: RunConfig):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name in SECTIONS:
        section = getattr(cfg, name)
        cp[name] = {f.name: _format_value(getattr(section, f.name))
                    for f in dataclasses.fields(section)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def replace_model(model: ModelSpec, **changes):
    """Rebuild a spec, dropping derived fields that changed inputs would invalidate."""
    d = dataclasses.asdict(model)
    if {"m", "n", "input_len"} & set(changes):
        for k in ("first_stride", "first_filter_len"):
            d[k] = None
    if {"m", "n"} & set(changes):
        d.update(channels=None, first_channels=None, final_channels=None)
    if "channels" in changes:
        d.update(first_channels=None, final_channels=None)
    d.update(changes)
    try:
        return ModelSpec(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
