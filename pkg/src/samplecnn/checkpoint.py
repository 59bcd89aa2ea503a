"""Binary checkpoint format.

Layout::

    b"SCNNCKPT"                 8-byte magic
    uint32 LE                   format version
    uint64 LE                   header length in bytes
    header                      UTF-8 JSON: model spec, array table, train state, extras
    payload                     little-endian float32 arrays in header order

Every array named in the header's ``arrays`` list is stored with its shape,
so the file is self-describing.  Parameters are held in float32 during
training, which makes a save/load round trip bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CheckpointError
from .model import ModelSpec, ParamSet, init_params, layer_specs
from .train import TrainState

MAGIC = b"SCNNCKPT"
VERSION = 1
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: ParamSet
    state: Optional[TrainState] = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, spec: ModelSpec, params: ParamSet, state: Optional[TrainState] = None,
                    extra=None):
    arrays = list(params.named_arrays())
    if state is not None:
        arrays += [(f"velocity.{i}", v) for i, v in enumerate(state.velocities)]
    header = {
        "model": spec.to_dict(),
        "layers": [ls.kind for ls in layer_specs(spec)],
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "state": None if state is None else state.scalars(),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=_DTYPE).tobytes())
    tmp.replace(path)


def read_header(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        raw = fh.read(12)
        if len(raw) != 12:
            raise CheckpointError(f"{path}: truncated header")
        version, n = struct.unpack("<IQ", raw)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header") from exc
        return header, fh.tell()


def load_checkpoint(path, expect_spec: Optional[ModelSpec] = None) -> Checkpoint:
    """Read a checkpoint; raises :class:`CheckpointError` if it disagrees with ``expect_spec``."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    header, offset = read_header(path)
    spec = ModelSpec.from_dict(header["model"])
    if expect_spec is not None and spec != expect_spec:
        raise CheckpointError(f"{path}: checkpoint model {spec} does not match {expect_spec}")
    params = init_params(spec, seed=0, dtype=np.float32)
    targets = dict(params.named_arrays())
    n_learnable = len(params.learnable())
    velocities = [None] * n_learnable
    seen = set()
    with open(path, "rb") as fh:
        fh.seek(offset)
        for entry in header["arrays"]:
            name, shape = entry["name"], tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            buf = fh.read(count * _DTYPE.itemsize)
            if len(buf) != count * _DTYPE.itemsize:
                raise CheckpointError(f"{path}: payload truncated at {name}")
            a = np.frombuffer(buf, dtype=_DTYPE).reshape(shape).astype(np.float32)
            if name.startswith("velocity."):
                k = int(name.split(".")[1])
                if not 0 <= k < n_learnable:
                    raise CheckpointError(f"{path}: velocity index {k} out of range")
                velocities[k] = a
                continue
            if name not in targets or targets[name].shape != shape:
                raise CheckpointError(f"{path}: array {name} {shape} does not fit the model")
            targets[name][...] = a
            seen.add(name)
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after payload")
    missing = set(targets) - seen
    if missing:
        raise CheckpointError(f"{path}: missing arrays {sorted(missing)}")
    state = None
    if header.get("state") is not None:
        if any(v is None for v in velocities):
            raise CheckpointError(f"{path}: train state without optimizer velocities")
        for v, p in zip(velocities, params.learnable()):
            if v.shape != p.shape:
                raise CheckpointError(f"{path}: velocity shape {v.shape} != parameter {p.shape}")
        state = TrainState.from_scalars(header["state"], velocities)
    return Checkpoint(spec, params, state, header.get("extra", {}))
