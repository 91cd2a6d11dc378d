"""From-scratch neural network stack."""

from ser.nn.checkpoint import (
    CheckpointError,
    ModelCheckpoint,
    checkpoint_from_model,
    freeze,
    load_checkpoint,
    model_from_checkpoint,
    read_checkpoint,
    replace_head,
    save_checkpoint,
    write_checkpoint,
)
from ser.nn.model import Model, ModelSpec, build_bilstm_classifier, build_mini_resnet
from ser.nn.optim import adam_step, softmax, softmax_cross_entropy
from ser.nn.train import History, Split, TrainConfig, TrainingDiverged, evaluate, train

__all__ = [
    "CheckpointError", "History", "Model", "ModelCheckpoint", "ModelSpec", "Split",
    "TrainConfig", "TrainingDiverged", "adam_step", "build_bilstm_classifier",
    "build_mini_resnet", "checkpoint_from_model", "evaluate", "freeze", "load_checkpoint",
    "model_from_checkpoint", "read_checkpoint", "replace_head", "save_checkpoint",
    "softmax", "softmax_cross_entropy", "train", "write_checkpoint",
]
