"""Glue between manifests, feature files and model inputs."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ser.audio_io import read_wav
from ser.dataset import Manifest
from ser.dsp import DspConfig, featurize, minmax_normalize, to_feature_vector
from ser.nn.train import Split
from ser.tensorfile import load_tensor, save_tensor

INDEX_NAME = "index.csv"


def featurize_paths(paths, kind: str, cfg: DspConfig, jobs: int = 1) -> list[np.ndarray]:
    def one(path):
        return featurize(read_wav(path), kind, cfg)

    if jobs <= 1:
        return [one(p) for p in paths]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, paths))


def featurize_manifest(manifest: Manifest, kind: str, cfg: DspConfig, out_dir, jobs: int = 1) -> Path:
    """Write one SERT file per manifest row plus ``index.csv`` (path, file)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    feats = featurize_paths([r.path for r in manifest], kind, cfg, jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "file"])
    for i, (row, f) in enumerate(zip(manifest, feats)):
        name = f"{i:06d}_{Path(row.path).stem}.sert"
        save_tensor(out / name, f)
        w.writerow([row.path, name])
    (out / INDEX_NAME).write_bytes(buf.getvalue().encode("utf-8"))
    return out


def load_features(features_dir, manifest: Manifest) -> dict:
    d = Path(features_dir)
    index_path = d / INDEX_NAME
    if not index_path.exists():
        raise FileNotFoundError(f"{index_path} not found; run `ser featurize` first")
    index = {r["path"]: r["file"] for r in csv.DictReader(io.StringIO(index_path.read_text("utf-8")))}
    out = {}
    for row in manifest:
        if row.path not in index:
            raise KeyError(f"no features for {row.path}")
        out[row.path] = load_tensor(d / index[row.path]).astype(np.float64)
    return out


def nn_split(manifest: Manifest, features: dict, split: str) -> Split:
    """Per-clip min-max normalized spectrogram images with integer labels."""
    rows = manifest.split(split)
    if not rows:
        return Split(np.zeros((0, 1, 1)), np.zeros(0, dtype=np.int64))
    x = np.stack([minmax_normalize(features[r.path]) for r in rows])
    y = np.array([int(r.emotion) for r in rows], dtype=np.int64)
    return Split(x, y)


def svm_split(manifest: Manifest, features: dict, split: str, n_mfcc: int = 20):
    rows = manifest.split(split)
    x = np.stack([to_feature_vector(features[r.path], n_mfcc) for r in rows]) if rows else np.zeros((0, n_mfcc))
    y = np.array([int(r.emotion) for r in rows], dtype=np.int64)
    return x, y
