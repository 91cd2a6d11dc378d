"""RAVDESS/SAVEE filename labels, manifests, and stratified splitting."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path

from ser.rng import Rng


class Emotion(IntEnum):
    NEUTRAL = 0
    CALM = 1
    HAPPY = 2
    SAD = 3
    ANGRY = 4
    FEARFUL = 5
    DISGUST = 6
    SURPRISED = 7

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Emotion":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown emotion {label!r}") from None


EMOTION_NAMES = [e.label for e in Emotion]
SPLITS = ("train", "val", "test", "unassigned")
DATASETS = ("ravdess", "savee", "synth")


class FilenameError(ValueError):
    pass


class FieldCount(FilenameError):
    pass


class CodeOutOfRange(FilenameError):
    pass


class UnknownCode(FilenameError):
    pass


@dataclass(frozen=True)
class ExampleMeta:
    path: str
    dataset: str
    actor: str
    emotion: Emotion
    split: str = "unassigned"

    def __post_init__(self):
        if not self.path:
            raise ValueError("path must be nonempty")
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        object.__setattr__(self, "emotion", Emotion(self.emotion))


def parse_ravdess_filename(name: str) -> ExampleMeta:
    """``MM-VC-EM-IN-ST-RP-AC.wav``: emotion is field 3, actor field 7."""
    base = Path(name).name
    if not base.lower().endswith(".wav"):
        raise FieldCount(f"{base}: expected a .wav file")
    fields = base[:-4].split("-")
    if len(fields) != 7:
        raise FieldCount(f"{base}: expected 7 fields, got {len(fields)}")
    if not all(len(f) == 2 and f.isdigit() for f in fields):
        raise FieldCount(f"{base}: fields must be 2-digit numbers")
    code = int(fields[2])
    if not 1 <= code <= 8:
        raise CodeOutOfRange(f"{base}: emotion code {fields[2]} outside 01-08")
    if int(fields[6]) < 1:
        raise CodeOutOfRange(f"{base}: actor {fields[6]} out of range")
    return ExampleMeta(str(name), "ravdess", fields[6], Emotion(code - 1))


SAVEE_CODES = {
    "a": Emotion.ANGRY,
    "d": Emotion.DISGUST,
    "f": Emotion.FEARFUL,
    "h": Emotion.HAPPY,
    "n": Emotion.NEUTRAL,
    "sa": Emotion.SAD,
    "su": Emotion.SURPRISED,
}


def parse_savee_filename(name: str) -> ExampleMeta:
    """``ACTOR_codeNN.wav``, e.g. ``DC_sa01.wav``."""
    base = Path(name).name
    if not base.lower().endswith(".wav"):
        raise FieldCount(f"{base}: expected a .wav file")
    parts = base[:-4].split("_")
    if len(parts) != 2 or not parts[0]:
        raise FieldCount(f"{base}: expected ACTOR_codeNN")
    actor, rest = parts
    code = rest.rstrip("0123456789")
    if code not in SAVEE_CODES or len(code) == len(rest):
        raise UnknownCode(f"{base}: unknown emotion code {code!r}")
    return ExampleMeta(str(name), "savee", actor, SAVEE_CODES[code])


class Manifest(list):
    """Ordered list of ExampleMeta with unique paths."""

    def __init__(self, rows=()):
        super().__init__(rows)
        seen = set()
        for row in self:
            if row.path in seen:
                raise ValueError(f"duplicate path {row.path}")
            seen.add(row.path)

    def split(self, name: str) -> "Manifest":
        return Manifest(r for r in self if r.split == name)

    def counts(self) -> dict:
        out: dict = {}
        for r in self:
            out[(r.emotion, r.split)] = out.get((r.emotion, r.split), 0) + 1
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "dataset", "actor", "emotion", "split"])
        for r in self:
            w.writerow([r.path, r.dataset, r.actor, r.emotion.label, r.split])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Manifest":
        rows = csv.DictReader(io.StringIO(text))
        if rows.fieldnames != ["path", "dataset", "actor", "emotion", "split"]:
            raise ValueError(f"bad manifest header {rows.fieldnames}")
        return cls(
            ExampleMeta(r["path"], r["dataset"], r["actor"], Emotion.from_label(r["emotion"]), r["split"])
            for r in rows
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_csv().encode("utf-8"))

    @classmethod
    def read(cls, path: str | Path) -> "Manifest":
        return cls.from_csv(Path(path).read_bytes().decode("utf-8"))


def largest_remainder(n: int, ratios) -> list[int]:
    ideal = [n * r for r in ratios]
    counts = [int(x) for x in ideal]
    order = sorted(range(len(ratios)), key=lambda i: (-(ideal[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(m: Manifest, ratios=(0.90, 0.05, 0.05), seed: int = 0,
                     classes=None) -> Manifest:
    """Per-class seeded shuffle, then largest-remainder cut into train/val/test.

    ``classes`` lists emotions that must be present; by default, those present.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError("ratios must be three non-negative values summing to 1")
    by_class: dict = {}
    for i, row in enumerate(m):
        by_class.setdefault(row.emotion, []).append(i)
    for c in classes or ():
        if not by_class.get(Emotion(c)):
            raise ValueError(f"class {Emotion(c).label} has no examples")
    rng = Rng(seed)
    assigned = list(m)
    for emotion in sorted(by_class):
        idx = by_class[emotion]
        order = [idx[j] for j in rng.permutation(len(idx))]
        n_train, n_val, _ = largest_remainder(len(idx), ratios)
        # every nonempty class keeps at least one training example
        if n_train == 0 and ratios[0] > 0:
            n_train = 1
            n_val = min(n_val, len(idx) - 1)
        for k, i in enumerate(order):
            split = "train" if k < n_train else "val" if k < n_train + n_val else "test"
            assigned[i] = replace(m[i], split=split)
    return Manifest(assigned)


def scan_dataset(directory: str | Path, dataset: str):
    """Parse every WAV below ``directory``; return (rows, unparseable paths)."""
    parser = parse_ravdess_filename if dataset == "ravdess" else parse_savee_filename
    rows, bad = [], []
    for path in sorted(Path(directory).rglob("*")):
        if not path.is_file() or path.suffix.lower() != ".wav":
            continue
        try:
            meta = parser(path.name)
        except FilenameError:
            bad.append(str(path))
            continue
        rows.append(replace(meta, path=str(path)))
    return rows, bad
