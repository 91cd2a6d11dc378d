"""Model specs, builders, and the sequential network container."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ser.nn.layers import (
    BatchNorm,
    BiLSTM,
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    MaxPool2,
    ReLU,
    ResidualBlock,
)
from ser.nn.optim import softmax
from ser.rng import Rng


@dataclass
class ModelSpec:
    """Ordered layer descriptors; the last one must be the dense ``head``."""

    kind: str
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("cnn", "lstm"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        heads = [d for d in self.layers if d["name"] == "head"]
        if len(heads) != 1 or self.layers[-1]["name"] != "head" or heads[0]["type"] != "dense":
            raise ValueError("model spec needs exactly one dense head as its last layer")
        names = [d["name"] for d in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        self._check_shapes()

    def _check_shapes(self):
        width = None  # channels for images, features for vectors
        for d in self.layers:
            t = d["type"]
            if t in ("conv", "residual"):
                if width is not None and d["in"] != width:
                    raise ValueError(f"{d['name']}: expects {d['in']} channels, gets {width}")
                width = d["out"]
            elif t == "batchnorm":
                if width is not None and d["channels"] != width:
                    raise ValueError(f"{d['name']}: batchnorm over {d['channels']} != {width}")
            elif t == "bilstm":
                width = 2 * d["hidden"]
            elif t == "dense":
                if width is not None and d["in"] != width:
                    raise ValueError(f"{d['name']}: dense expects {d['in']} inputs, gets {width}")
                width = d["out"]

    @property
    def n_classes(self) -> int:
        return self.layers[-1]["out"]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "layers": [dict(d) for d in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["kind"], [dict(x) for x in d["layers"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def build_bilstm_classifier(n_mels: int = 128, hidden: int = 32, n_classes: int = 8,
                            dropout: float = 0.3, n_layers: int = 2) -> ModelSpec:
    """Frames (T x n_mels) -> 2-layer bi-LSTM -> dropout -> dense head (softmax in loss)."""
    return ModelSpec("lstm", [
        {"name": "bilstm", "type": "bilstm", "in": n_mels, "hidden": hidden, "layers": n_layers},
        {"name": "dropout", "type": "dropout", "p": dropout},
        {"name": "head", "type": "dense", "in": 2 * hidden, "out": n_classes},
    ])


def build_mini_resnet(stages=(8, 16, 32), n_classes: int = 8, blocks=2,
                      in_channels: int = 1) -> ModelSpec:
    """Stride-2 stem conv + maxpool, residual stages, global average pool, dense head.

    ``blocks`` is an int or one count per stage; (64, 128, 256, 512) with
    [3, 4, 6, 3] blocks gives the 34-layer layout.
    """
    stages = list(stages)
    per_stage = [blocks] * len(stages) if isinstance(blocks, int) else list(blocks)
    if len(per_stage) != len(stages):
        raise ValueError("need one block count per stage")
    c0 = stages[0]
    layers = [
        {"name": "stem.conv", "type": "conv", "in": in_channels, "out": c0, "kernel": 3, "stride": 2},
        {"name": "stem.bn", "type": "batchnorm", "channels": c0},
        {"name": "stem.relu", "type": "relu"},
        {"name": "stem.pool", "type": "maxpool2"},
    ]
    c_prev = c0
    for s, (c, nb) in enumerate(zip(stages, per_stage), start=1):
        for b in range(nb):
            stride = 2 if (b == 0 and s > 1) else 1
            layers.append({"name": f"stage{s}.block{b}", "type": "residual",
                           "in": c_prev, "out": c, "stride": stride})
            c_prev = c
    layers.append({"name": "pool", "type": "globalavgpool"})
    layers.append({"name": "head", "type": "dense", "in": c_prev, "out": n_classes})
    return ModelSpec("cnn", layers)


def _make_layer(d: dict, rng: Rng, dtype) -> Layer:
    t = d["type"]
    if t == "dense":
        return Dense(d["in"], d["out"], rng, dtype)
    if t == "conv":
        return Conv2d(d["in"], d["out"], d.get("kernel", 3), d.get("stride", 1), rng, dtype)
    if t == "batchnorm":
        return BatchNorm(d["channels"], dtype)
    if t == "relu":
        return ReLU()
    if t == "maxpool2":
        return MaxPool2()
    if t == "globalavgpool":
        return GlobalAvgPool()
    if t == "dropout":
        return Dropout(d["p"])
    if t == "residual":
        return ResidualBlock(d["in"], d["out"], d.get("stride", 1), rng, dtype)
    if t == "bilstm":
        return BiLSTM(d["in"], d["hidden"], d.get("layers", 2), rng, dtype)
    raise ValueError(f"unknown layer type {t!r}")


class Model:
    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        rng = Rng(seed)
        self.layers: dict[str, Layer] = {d["name"]: _make_layer(d, rng, self.dtype) for d in spec.layers}
        self.frozen: set[str] = set()
        self.set_dropout_seed(seed)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def n_classes(self) -> int:
        return self.spec.n_classes

    def set_dropout_seed(self, seed: int):
        for layer in self.layers.values():
            if isinstance(layer, Dropout):
                layer.rng = Rng(seed ^ 0xD50)

    def forward(self, x, train: bool = False):
        h = np.asarray(x, dtype=self.dtype)
        for layer in self.layers.values():
            h = layer.forward(h, train)
        return h

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(list(self.layers.values())):
            d = layer.backward(d)
        return d

    def predict_proba(self, x, batch_size: int = 64):
        out = []
        for i in range(0, len(x), batch_size):
            out.append(softmax(self.forward(x[i : i + batch_size], train=False).astype(np.float64)))
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    def tensors(self) -> dict:
        """All parameters and buffers by full dotted name (live arrays)."""
        out = {}
        for lname, layer in self.layers.items():
            for name, arr, _ in layer.named_tensors(lname + "."):
                out[name] = arr
        return out

    def parameters(self) -> dict:
        out = {}
        for lname, layer in self.layers.items():
            for name, arr, is_buffer in layer.named_tensors(lname + "."):
                if not is_buffer:
                    out[name] = arr
        return out

    def gradients(self) -> dict:
        out = {}
        for lname, layer in self.layers.items():
            out.update(layer.named_grads(lname + "."))
        return out

    def n_parameters(self) -> int:
        return sum(a.size for a in self.parameters().values())

    def freeze(self, prefixes) -> set:
        names = set(self.frozen)
        for prefix in prefixes:
            hits = {n for n in self.tensors() if n == prefix or n.startswith(prefix + ".")}
            if not hits:
                raise KeyError(f"no tensors match prefix {prefix!r}")
            names |= hits
        self.set_frozen(names)
        return names

    def set_frozen(self, names):
        self.frozen = set(names)
        for lname, layer in self.layers.items():
            layer.set_frozen(self.frozen, lname + ".")
