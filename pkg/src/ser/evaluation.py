"""Confusion matrices, accuracy / precision / recall / F1, and report files."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ser.dataset import EMOTION_NAMES
from ser.plotting import loss_curve_svg

N_CLASSES = 8


def confusion(true_labels, predicted, n_classes: int = N_CLASSES) -> np.ndarray:
    """counts[t, p]: rows are true labels, columns predictions."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise ValueError("no examples")
    if t.min() < 0 or p.min() < 0 or max(t.max(), p.max()) >= n_classes:
        raise ValueError("label outside [0, n_classes)")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _safe_div(a, b):
    return np.divide(a, b, out=np.zeros(np.shape(a), dtype=np.float64), where=np.asarray(b) != 0)


@dataclass
class MetricsReport:
    accuracy: float
    precision: list
    recall: list
    f1: list
    support: list
    macro_f1: float
    weighted_f1: float
    confusion: list
    split: str = ""
    model_id: str = ""
    class_names: list = field(default_factory=lambda: list(EMOTION_NAMES))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def metrics(cm, split: str = "", model_id: str = "") -> MetricsReport:
    """Per-class P/R/F1 (0 when undefined) plus macro and support-weighted F1.

    The macro average runs over classes that occur in the matrix (nonzero
    support or predictions); absent classes report F1 = 0 individually.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total <= 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    pred = cm.sum(axis=0)
    support = cm.sum(axis=1)
    precision = _safe_div(tp, pred)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    present = (support > 0) | (pred > 0)
    macro = float(f1[present].mean())
    weighted = float((f1 * support).sum() / support.sum())
    n = cm.shape[0]
    names = list(EMOTION_NAMES) if n == len(EMOTION_NAMES) else [str(i) for i in range(n)]
    return MetricsReport(
        accuracy=int(tp.sum()) / total,
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        support=support.tolist(),
        macro_f1=macro,
        weighted_f1=weighted,
        confusion=cm.tolist(),
        split=split,
        model_id=model_id,
        class_names=names,
    )


def table_row(r: MetricsReport, model_name: str | None = None) -> str:
    """``<model> <accuracy %> <F1>``, e.g. ``SVM 51.7% 0.509``."""
    return f"{model_name or r.model_id} {100 * r.accuracy:.1f}% {r.macro_f1:.3f}"


def confusion_csv(r: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(r.class_names)
    w.writerows(r.confusion)
    return buf.getvalue()


def emit_report(r: MetricsReport, history, out_dir, model_name: str | None = None) -> dict:
    """Write metrics.json, confusion.csv, loss_curve.svg and summary.txt; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / "metrics.json",
        "confusion": out / "confusion.csv",
        "loss_curve": out / "loss_curve.svg",
        "summary": out / "summary.txt",
    }
    paths["metrics"].write_text(r.to_json(), encoding="utf-8")
    paths["confusion"].write_text(confusion_csv(r), encoding="utf-8")
    train_loss = list(history.train_loss) if history is not None else []
    val_loss = list(history.val_loss) if history is not None else []
    paths["loss_curve"].write_text(loss_curve_svg(train_loss, val_loss), encoding="utf-8")
    summary = "Model Accuracy F1\n" + table_row(r, model_name) + "\n"
    summary += f"weighted F1 {r.weighted_f1:.3f}\n"
    paths["summary"].write_text(summary, encoding="utf-8")
    return paths
