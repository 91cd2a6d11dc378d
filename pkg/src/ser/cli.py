"""``ser`` command line: synth, ingest, featurize, train, eval, plot.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ser import __version__
from ser.audio_io import SynthSpec, WavError, read_wav, synth_corpus
from ser.dataset import EMOTION_NAMES, Manifest, scan_dataset, stratified_split
from ser.dsp import FEATURE_KINDS, DspConfig, featurize, minmax_normalize, to_feature_vector
from ser.evaluation import confusion, emit_report, metrics
from ser.nn.checkpoint import (
    CheckpointError,
    freeze,
    load_checkpoint,
    model_from_checkpoint,
    read_checkpoint,
    replace_head,
    save_checkpoint,
)
from ser.nn.model import Model, build_bilstm_classifier, build_mini_resnet
from ser.nn.train import History, Split, TrainConfig, TrainingDiverged, _resize_all, to_model_input, train
from ser.pipeline import featurize_manifest, load_features, nn_split, svm_split
from ser.plotting import loss_curve_svg, spectrogram_svg, waveform_svg
from ser.rng import derive_seed
from ser.svm import SvmError, load_svm, ovo_train, save_svm
from ser.tensorfile import TensorFileError, load_tensor

log = logging.getLogger("ser")

FORMATS = {"SERT": 1, "SERC": 1, "ser-svm": 1, "manifest": "path,dataset,actor,emotion,split"}

DEFAULT_CONFIG = {
    "seed": 0,
    "dsp": {"sample_rate": 22050, "duration": 4.0, "n_fft": 2048, "hop": 512,
            "n_mels": 128, "n_mfcc": 20, "fmin": 0.0, "fmax": None},
    "split": [0.9, 0.05, 0.05],
    "svm": {"C": 1.0, "gamma": None, "tol": 1e-3, "max_passes": 1000},
    "lstm": {"hidden": 32, "dropout": 0.3, "layers": 2},
    "cnn": {"channels": [8, 16, 32], "blocks": 2},
    "train": {"batch_size": 64, "lr": 0.001, "lr_decay": 0.9, "decay_every": 10, "epochs": 30,
              "mixup": False, "mixup_alpha": 0.4, "augment": None,
              "stages": [[128, 20], [256, 10]], "freeze": []},
    "transfer": {"freeze": ["stem", "stage1"]},
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(args) -> dict:
    """Defaults < JSON config file < SER_SEED < command-line flags."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        try:
            cfg = _merge(cfg, json.loads(Path(args.config).read_text("utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
    if os.environ.get("SER_SEED"):
        try:
            cfg["seed"] = int(os.environ["SER_SEED"])
        except ValueError:
            raise UsageError("SER_SEED must be an integer") from None
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg["train"]["epochs"] = args.epochs
        cfg["train"]["stages"] = [[s, args.epochs] for s, _ in cfg["train"]["stages"][:1]]
    if getattr(args, "sample_rate", None) is not None:
        cfg["dsp"]["sample_rate"] = args.sample_rate
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()


def write_run_record(out_dir, command: str, argv, cfg: dict, **extra) -> None:
    record = {
        "command": command,
        "argv": list(argv),
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "formats": FORMATS,
        "version": __version__,
    }
    record.update(extra)
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def dsp_config(cfg: dict) -> DspConfig:
    return DspConfig(**cfg["dsp"])


def _ratios(text: str):
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("ratios must be three comma-separated numbers") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios must be three comma-separated numbers")
    return parts


# --- commands -------------------------------------------------------------

def cmd_synth(args, argv):
    cfg = resolve_config(args)
    ratios = args.split or cfg["split"]
    spec = SynthSpec(n_classes=args.classes, per_class=args.per_class, duration_s=args.duration,
                     seed=cfg["seed"], noise_level=args.noise, sample_rate=cfg["dsp"]["sample_rate"])
    out = Path(args.out)
    manifest = synth_corpus(spec, out, ratios)
    manifest.write(out / "manifest.csv")
    write_run_record(out, "synth", argv, cfg, files=len(manifest))
    print(f"wrote {len(manifest)} clips and {out / 'manifest.csv'}")


def cmd_ingest(args, argv):
    cfg = resolve_config(args)
    if not args.ravdess and not args.savee:
        raise UsageError("ingest needs --ravdess and/or --savee")
    rows, bad = [], []
    for directory, name in ((args.ravdess, "ravdess"), (args.savee, "savee")):
        if directory:
            if not Path(directory).is_dir():
                raise DataError(f"{directory} is not a directory")
            r, b = scan_dataset(directory, name)
            rows += r
            bad += b
    if not rows:
        raise DataError("no parseable WAV files found")
    manifest = stratified_split(Manifest(rows), args.split or cfg["split"], derive_seed(cfg["seed"], "split"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.write(out)
    write_run_record(out.parent, "ingest", argv, cfg, rows=len(manifest), unparseable=bad)
    print(f"wrote {len(manifest)} rows to {out}")
    if bad:
        print("unparseable filenames:", file=sys.stderr)
        for b in bad:
            print(f"  {b}", file=sys.stderr)
        return 2
    return 0


def cmd_featurize(args, argv):
    cfg = resolve_config(args)
    manifest = _read_manifest(args.manifest)
    try:
        out = featurize_manifest(manifest, args.kind, dsp_config(cfg), args.out, args.jobs)
    except (WavError, OSError) as exc:
        raise DataError(str(exc)) from None
    write_run_record(out, "featurize", argv, cfg, kind=args.kind, files=len(manifest))
    print(f"wrote {len(manifest)} {args.kind} tensors to {out}")


def _read_manifest(path) -> Manifest:
    try:
        return Manifest.read(path)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None


def _features_kind(features_dir) -> str | None:
    run = Path(features_dir) / "run.json"
    if run.exists():
        return json.loads(run.read_text("utf-8")).get("kind")
    return None


def _train_config(cfg: dict, model: str) -> TrainConfig:
    t = dict(cfg["train"])
    if model != "cnn":
        t["stages"] = []
    t["seed"] = derive_seed(cfg["seed"], "train", model)
    return TrainConfig(**t)


def cmd_train(args, argv):
    cfg = resolve_config(args)
    manifest = _read_manifest(args.manifest)
    try:
        feats = load_features(args.features, manifest)
    except (OSError, KeyError, TensorFileError) as exc:
        raise DataError(str(exc)) from None
    kind = _features_kind(args.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"features": kind, "dsp": cfg["dsp"], "model_name": args.model}

    if args.model == "svm":
        x, y = svm_split(manifest, feats, "train", cfg["dsp"]["n_mfcc"])
        if len(y) == 0:
            raise DataError("train split is empty")
        s = cfg["svm"]
        try:
            model = ovo_train(x, y, C=s["C"], gamma=s["gamma"], tol=s["tol"], max_passes=s["max_passes"],
                              seed=derive_seed(cfg["seed"], "train", "svm") & 0xFFFFFFFF)
        except SvmError as exc:
            raise DataError(str(exc)) from None
        model.meta = meta
        (out / "model.svm").write_bytes(save_svm(model))
        write_run_record(out, "train", argv, cfg, model="svm")
        print(f"trained {len(model.models)} pairwise SVMs -> {out / 'model.svm'}")
        return 0

    if kind not in (None, "logmel"):
        raise DataError(f"{args.model} needs logmel features, got {kind}")
    data = {"train": nn_split(manifest, feats, "train"), "val": nn_split(manifest, feats, "val")}
    if len(data["train"]) == 0 or len(data["val"]) == 0:
        raise DataError("train and val splits must both be nonempty")
    tcfg = _train_config(cfg, args.model)
    n_classes = len(EMOTION_NAMES)
    n_mels = data["train"].x.shape[1]
    if args.pretrained:
        try:
            ck = read_checkpoint(args.pretrained)
        except (OSError, CheckpointError) as exc:
            raise DataError(f"cannot load pretrained checkpoint: {exc}") from None
        ck = replace_head(ck, n_classes, seed=derive_seed(cfg["seed"], "head"))
        for prefix in (args.freeze.split(",") if args.freeze else cfg["transfer"]["freeze"]):
            ck = freeze(ck, prefix)
        net = model_from_checkpoint(ck, dtype=tcfg.dtype)
    elif args.model == "lstm":
        c = cfg["lstm"]
        spec = build_bilstm_classifier(n_mels, c["hidden"], n_classes, c["dropout"], c["layers"])
        net = Model(spec, seed=derive_seed(tcfg.seed, "init"), dtype=tcfg.dtype)
    else:
        c = cfg["cnn"]
        net = Model(build_mini_resnet(c["channels"], n_classes, c["blocks"]),
                    seed=derive_seed(tcfg.seed, "init"), dtype=tcfg.dtype)
    try:
        best, history = train(net, data, tcfg)
    except TrainingDiverged as exc:
        raise DataError(str(exc)) from None
    best.meta.update(meta)
    (out / "model.serc").write_bytes(save_checkpoint(best))
    (out / "history.csv").write_text(history.to_csv(), encoding="utf-8")
    (out / "loss_curve.svg").write_text(loss_curve_svg(history.train_loss, history.val_loss), encoding="utf-8")
    write_run_record(out, "train", argv, cfg, model=args.model, train_config=tcfg.to_dict(),
                     best_epoch=best.meta["epoch"], stage_boundaries=history.stage_boundaries)
    print(f"best epoch {best.meta['epoch']} val acc {max(history.val_acc):.3f} -> {out / 'model.serc'}")
    return 0


def _load_any_model(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    try:
        if data[:4] == b"SERC":
            return "nn", load_checkpoint(data)
        return "svm", load_svm(data)
    except (CheckpointError, SvmError, TensorFileError) as exc:
        raise DataError(f"invalid checkpoint {path}: {exc}") from None


def cmd_eval(args, argv):
    cfg = resolve_config(args)
    kind, model = _load_any_model(args.checkpoint)
    manifest = _read_manifest(args.manifest)
    rows = manifest.split(args.split)
    if not rows:
        raise DataError(f"split {args.split!r} is empty")
    meta = model.meta
    if args.features:
        try:
            feats = load_features(args.features, rows)
        except (OSError, KeyError, TensorFileError) as exc:
            raise DataError(str(exc)) from None
    else:
        dcfg = DspConfig(**meta.get("dsp", cfg["dsp"]))
        try:
            feats = {r.path: featurize(read_wav(r.path), "logmel", dcfg) for r in rows}
        except (WavError, OSError) as exc:
            raise DataError(str(exc)) from None
    y = np.array([int(r.emotion) for r in rows])
    if kind == "svm":
        x = np.stack([to_feature_vector(feats[r.path], cfg["dsp"]["n_mfcc"]) for r in rows])
        pred = model.predict(x)
    else:
        net = model_from_checkpoint(model)
        imgs = _resize_all(np.stack([minmax_normalize(feats[r.path]) for r in rows]), meta.get("input_size"))
        pred = net.predict_proba(to_model_input(net.kind, imgs)).argmax(axis=1)
    name = args.name or meta.get("model_name", kind)
    report = metrics(confusion(y, pred, len(EMOTION_NAMES)), split=args.split, model_id=name)
    hist_path = Path(args.checkpoint).parent / "history.csv"
    history = History.from_csv(hist_path.read_text("utf-8")) if hist_path.exists() else None
    emit_report(report, history, args.out, name)
    write_run_record(args.out, "eval", argv, cfg, checkpoint=str(args.checkpoint), split=args.split)
    print(f"{name} {100 * report.accuracy:.1f}% {report.macro_f1:.3f}")
    return 0


def cmd_plot(args, argv):
    src = Path(args.input)
    try:
        if src.suffix == ".csv":
            h = History.from_csv(src.read_text("utf-8"))
            svg = loss_curve_svg(h.train_loss, h.val_loss, args.title or "")
        elif src.suffix == ".sert":
            svg = spectrogram_svg(load_tensor(src))
        elif src.suffix.lower() == ".wav":
            clip = read_wav(src)
            svg = waveform_svg(clip.samples, clip.sample_rate)
        else:
            raise DataError(f"cannot plot {src}: expected .csv, .sert or .wav")
    except (OSError, ValueError) as exc:
        raise DataError(f"unreadable input {src}: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ser", description="Speech emotion recognition toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags take precedence")
        sp.add_argument("--seed", type=int)

    s = sub.add_parser("synth", help="write a synthetic labeled corpus")
    common(s)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--per-class", type=int, default=50)
    s.add_argument("--duration", type=float, default=4.0)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--sample-rate", type=int)
    s.add_argument("--split", type=_ratios)
    s.add_argument("--out", required=True)

    s = sub.add_parser("ingest", help="build a split manifest from RAVDESS/SAVEE folders")
    common(s)
    s.add_argument("--ravdess")
    s.add_argument("--savee")
    s.add_argument("--split", type=_ratios)
    s.add_argument("--out", required=True)

    s = sub.add_parser("featurize", help="extract logmel / mfcc / mfcc-mean tensors")
    common(s)
    s.add_argument("--manifest", required=True)
    s.add_argument("--kind", choices=FEATURE_KINDS, default="logmel")
    s.add_argument("--sample-rate", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="train an svm, lstm or cnn classifier")
    common(s)
    s.add_argument("--model", choices=("svm", "lstm", "cnn"), required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--epochs", type=int)
    s.add_argument("--pretrained", help="SERC checkpoint to fine-tune (head is replaced)")
    s.add_argument("--freeze", help="comma-separated tensor prefixes to freeze when fine-tuning")
    s.add_argument("--out", default="train_out")

    s = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    common(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=("train", "val", "test"), default="val")
    s.add_argument("--features")
    s.add_argument("--name", help="model name for the summary row")
    s.add_argument("--out", required=True)

    s = sub.add_parser("plot", help="render a history CSV, SERT spectrogram or WAV as SVG")
    s.add_argument("--input", required=True)
    s.add_argument("--title")
    s.add_argument("--out", required=True)
    return p


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "featurize": cmd_featurize,
            "train": cmd_train, "eval": cmd_eval, "plot": cmd_plot}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("ser: error: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        code = COMMANDS[args.command](args, argv)
        return 0 if code is None else code
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"ser: data error: {exc}", file=sys.stderr)
        return 2


def dispatch(argv) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
