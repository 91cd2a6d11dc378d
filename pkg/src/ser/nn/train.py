"""Mini-batch training with Adam, step lr decay, Mixup, augmentation and progressive resizing."""

from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ser.augment import AugmentPolicy, apply_policy, mixup, sample_lambda
from ser.dsp import resize_bilinear
from ser.nn.checkpoint import ModelCheckpoint, checkpoint_from_model
from ser.nn.model import Model, ModelSpec
from ser.nn.optim import adam_step, softmax_cross_entropy
from ser.rng import Rng, derive_seed

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.9
    decay_every: int = 10
    epochs: int = 30
    seed: int = 0
    mixup: bool = False
    mixup_alpha: float = 0.4
    augment: AugmentPolicy | None = None
    stages: list = field(default_factory=list)  # [(size, epochs), ...] for image models
    freeze: list = field(default_factory=list)
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size <= 0 or self.lr <= 0 or self.decay_every <= 0 or self.epochs < 0:
            raise ValueError("batch_size, lr, decay_every must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        self.stages = [tuple(int(v) for v in s) for s in self.stages]
        sizes = [s for s, _ in self.stages]
        if sizes != sorted(sizes) or any(s <= 0 or e < 0 for s, e in self.stages):
            raise ValueError("progressive stages must be positive and ordered by size")
        if isinstance(self.augment, dict):
            self.augment = AugmentPolicy.from_dict(self.augment)

    @property
    def total_epochs(self) -> int:
        return sum(e for _, e in self.stages) if self.stages else self.epochs

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augment"] = self.augment.to_dict() if self.augment else None
        d["stages"] = [list(s) for s in self.stages]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Split:
    """Featurized examples: x is (N, n_mels, frames) normalized spectrograms, y int labels."""

    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


@dataclass
class History:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    stage_size: list = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, val_acc, size=None):
        self.epoch.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_acc.append(val_acc)
        self.stage_size.append(size)

    def __len__(self):
        return len(self.epoch)

    @property
    def stage_boundaries(self) -> list:
        """Epoch indices at which a new progressive-resizing stage began."""
        return [i for i in range(1, len(self)) if self.stage_size[i] != self.stage_size[i - 1]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_loss,val_acc\n")
        for row in zip(self.epoch, self.train_loss, self.val_loss, self.val_acc):
            buf.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "History":
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != "epoch,train_loss,val_loss,val_acc":
            raise ValueError("not a history CSV")
        h = cls()
        for line in lines[1:]:
            e, tl, vl, va = line.split(",")
            h.append(int(e), float(tl), float(vl), float(va))
        return h


def one_hot(y, n_classes: int) -> np.ndarray:
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def _resize_all(x: np.ndarray, size: int | None) -> np.ndarray:
    if size is None or x.shape[1:] == (size, size):
        return x
    return np.stack([resize_bilinear(img, size, size) for img in x])


def to_model_input(kind: str, images: np.ndarray) -> np.ndarray:
    """(N, n_mels, frames) images -> NCHW for CNNs, (N, frames, n_mels) for LSTMs."""
    if kind == "cnn":
        return images[:, None, :, :]
    return images.transpose(0, 2, 1)


def evaluate(model: Model, split: Split, size: int | None = None, batch_size: int = 64):
    """Mean loss and accuracy in eval mode."""
    x = to_model_input(model.kind, _resize_all(split.x, size))
    probs = model.predict_proba(x, batch_size)
    targets = one_hot(split.y, model.n_classes)
    loss = float(-np.mean(np.log(np.maximum((probs * targets).sum(axis=1), 1e-300))))
    acc = float(np.mean(probs.argmax(axis=1) == split.y))
    return loss, acc


def train(model, data: dict, cfg: TrainConfig) -> tuple[ModelCheckpoint, History]:
    """Train ``model`` in place on ``data['train']``, validating on ``data['val']``.

    Returns the checkpoint with the best validation accuracy (ties go to the
    lower validation loss, then the earlier epoch) and the per-epoch history.
    """
    if isinstance(model, ModelSpec):
        model = Model(model, seed=derive_seed(cfg.seed, "init"), dtype=cfg.dtype)
    train_split, val_split = data["train"], data["val"]
    if len(train_split) == 0 or len(val_split) == 0:
        raise ValueError("train and val splits must be nonempty")
    if cfg.freeze:
        model.freeze(cfg.freeze)
    model.set_dropout_seed(derive_seed(cfg.seed, "dropout"))

    stages = cfg.stages or [(None, cfg.epochs)]
    if model.kind != "cnn" and cfg.stages:
        raise ValueError("progressive resizing applies to image models only")
    n_classes = model.n_classes
    y_soft = one_hot(train_split.y, n_classes)
    params = model.parameters()
    opt_state: dict = {}
    step = 0
    history = History()
    best = None
    best_key = None
    epoch = 0
    for size, n_epochs in stages:
        x_train = _resize_all(train_split.x, size)
        for _ in range(n_epochs):
            lr = cfg.lr_at(epoch)
            order = Rng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(len(train_split))
            losses, weights = [], []
            for b, start in enumerate(range(0, len(order), cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                xb = x_train[idx]
                yb = y_soft[idx]
                if cfg.augment is not None:
                    xb = np.stack([
                        apply_policy(img, cfg.augment, Rng(derive_seed(cfg.seed, "augment", epoch, int(i))))
                        for img, i in zip(xb, idx)
                    ])
                if cfg.mixup and len(idx) > 1:
                    mrng = Rng(derive_seed(cfg.seed, "mixup", epoch, b))
                    lam = sample_lambda(cfg.mixup_alpha, mrng)
                    partner = mrng.permutation(len(idx))
                    xb, yb = mixup(xb, xb[partner], yb, yb[partner], lam)
                logits = model.forward(to_model_input(model.kind, xb), train=True)
                loss, grad = softmax_cross_entropy(logits.astype(np.float64), yb)
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch)
                model.backward(grad.astype(model.dtype))
                step += 1
                try:
                    adam_step(params, model.gradients(), opt_state, lr=lr, t=step, frozen=model.frozen)
                except FloatingPointError:
                    raise TrainingDiverged(epoch, "gradient") from None
                losses.append(loss)
                weights.append(len(idx))
            train_loss = float(np.average(losses, weights=weights))
            val_loss, val_acc = evaluate(model, val_split, size, cfg.batch_size)
            if not np.isfinite(val_loss):
                raise TrainingDiverged(epoch, "validation loss")
            history.append(epoch, train_loss, val_loss, val_acc, size)
            log.info("epoch %d size %s lr %.3g train %.4f val %.4f acc %.3f",
                     epoch, size, lr, train_loss, val_loss, val_acc)
            key = (-val_acc, val_loss)
            if best_key is None or key < best_key:
                best_key = key
                best = checkpoint_from_model(model, epoch=epoch, config_hash=cfg.digest(),
                                             input_size=size)
            epoch += 1
    if best is None:
        best = checkpoint_from_model(model, epoch=-1, config_hash=cfg.digest(), input_size=None)
    return best, history
