"""SERC checkpoints: named float32 tensors with freeze flags.

Layout: ``SERC`` | version u32 | count u32 | per tensor: name length u16,
UTF-8 name, flags u8 (bit0 = frozen), ndim u8, dims u32*ndim, f32 LE payload.
A trailer (u32 length + UTF-8 JSON) carries the model spec and training
metadata; readers that stop after the tensors can ignore it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ser.nn.model import Model, ModelSpec
from ser.rng import Rng

SERC_MAGIC = b"SERC"
SERC_VERSION = 1
FLAG_FROZEN = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelCheckpoint:
    tensors: dict  # name -> float32 ndarray, insertion ordered
    frozen: frozenset = frozenset()
    meta: dict = field(default_factory=dict)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec.from_dict(self.meta["spec"])


def checkpoint_from_model(model: Model, **meta) -> ModelCheckpoint:
    tensors = {k: np.array(v, dtype=np.float32) for k, v in model.tensors().items()}
    info = {"spec": model.spec.to_dict()}
    info.update(meta)
    return ModelCheckpoint(tensors, frozenset(model.frozen), info)


def model_from_checkpoint(c: ModelCheckpoint, dtype=np.float32) -> Model:
    model = Model(c.spec, seed=0, dtype=dtype)
    load_into(model, c)
    return model


def load_into(model: Model, c: ModelCheckpoint, strict: bool = True) -> None:
    live = model.tensors()
    if strict and set(live) != set(c.tensors):
        missing = sorted(set(live) ^ set(c.tensors))
        raise CheckpointError(f"checkpoint/model tensor mismatch: {missing[:5]}")
    for name, arr in c.tensors.items():
        if name not in live:
            continue
        if live[name].shape != arr.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} != model {live[name].shape}")
        live[name][...] = arr
    model.set_frozen(set(c.frozen) & set(live))


def save_checkpoint(c: ModelCheckpoint) -> bytes:
    parts = [SERC_MAGIC, struct.pack("<II", SERC_VERSION, len(c.tensors))]
    for name, arr in c.tensors.items():
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        flags = FLAG_FROZEN if name in c.frozen else 0
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", flags, a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape) + a.tobytes())
    meta = json.dumps(c.meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)) + meta)
    return b"".join(parts)


def load_checkpoint(data: bytes) -> ModelCheckpoint:
    if data[:4] != SERC_MAGIC:
        raise CheckpointError("not a SERC checkpoint (bad magic)")
    if len(data) < 12:
        raise CheckpointError("truncated checkpoint header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != SERC_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    tensors, frozen = {}, set()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            flags, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = 4 * int(np.prod(dims, dtype=np.int64))
            if pos + size > len(data):
                raise CheckpointError(f"truncated payload for {name}")
            if name in tensors:
                raise CheckpointError(f"duplicate tensor name {name}")
            tensors[name] = np.frombuffer(data[pos : pos + size], dtype="<f4").reshape(dims).astype(np.float32)
            pos += size
            if flags & FLAG_FROZEN:
                frozen.add(name)
        meta = {}
        if pos + 4 <= len(data):
            (mlen,) = struct.unpack_from("<I", data, pos)
            meta = json.loads(data[pos + 4 : pos + 4 + mlen].decode("utf-8"))
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return ModelCheckpoint(tensors, frozenset(frozen), meta)


def write_checkpoint(path: str | Path, c: ModelCheckpoint) -> None:
    Path(path).write_bytes(save_checkpoint(c))


def read_checkpoint(path: str | Path) -> ModelCheckpoint:
    return load_checkpoint(Path(path).read_bytes())


def freeze(c: ModelCheckpoint, prefix: str) -> ModelCheckpoint:
    """Mark every tensor named ``prefix`` or ``prefix.*`` as frozen."""
    hits = {n for n in c.tensors if n == prefix or n.startswith(prefix + ".")}
    if not hits:
        raise CheckpointError(f"unknown prefix {prefix!r}")
    return replace(c, frozen=frozenset(c.frozen | hits))


def replace_head(c: ModelCheckpoint, n_classes: int, seed: int = 0) -> ModelCheckpoint:
    """Re-initialize the dense head for ``n_classes`` outputs; other tensors untouched."""
    w = c.tensors.get("head.weight")
    if w is None:
        raise CheckpointError("checkpoint has no head.weight")
    n_in = w.shape[0]
    rng = Rng(seed)
    tensors = dict(c.tensors)
    tensors["head.weight"] = (rng.normal(size=(n_in, n_classes)) * np.sqrt(2.0 / n_in)).astype(np.float32)
    tensors["head.bias"] = np.zeros(n_classes, dtype=np.float32)
    meta = json.loads(json.dumps(c.meta))
    if "spec" in meta:
        meta["spec"]["layers"][-1]["out"] = n_classes
    frozen = frozenset(n for n in c.frozen if not n.startswith("head."))
    return ModelCheckpoint(tensors, frozen, meta)
