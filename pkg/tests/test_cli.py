import json
import subprocess
import sys

import numpy as np
import pytest

from ser.audio_io import AudioClip, write_wav
from ser.cli import main
from ser.dataset import Manifest
from ser.tensorfile import load_tensor

TINY = {
    "cnn": {"channels": [4, 8], "blocks": 1},
    "lstm": {"hidden": 4},
    "train": {"batch_size": 16, "stages": [[32, 2]]},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.json").write_text(json.dumps(TINY))
    assert main(["synth", "--classes", "4", "--per-class", "8", "--duration", "0.3", "--seed", "7",
                 "--split", "0.5,0.25,0.25", "--out", str(root / "corpus")]) == 0
    assert main(["featurize", "--manifest", str(root / "corpus" / "manifest.csv"),
                 "--out", str(root / "feats"), "--jobs", "2"]) == 0
    return root


def run_train(ws, model, out, *extra):
    return main(["train", "--model", model, "--config", str(ws / "tiny.json"),
                 "--manifest", str(ws / "corpus" / "manifest.csv"), "--features", str(ws / "feats"),
                 "--out", str(ws / out), *extra])


def test_synth_writes_clips_and_manifest(tmp_path):
    assert main(["synth", "--classes", "4", "--per-class", "50", "--duration", "0.05",
                 "--seed", "7", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.wav"))) == 200
    m = Manifest.read(tmp_path / "manifest.csv")
    assert len(m) == 200
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["seed"] == 7 and run["command"] == "synth"
    assert "timestamp" not in json.dumps(run)


def test_featurize_outputs(workspace):
    index = (workspace / "feats" / "index.csv").read_text().splitlines()
    assert index[0] == "path,file" and len(index) == 33
    first = index[1].split(",")[1]
    assert load_tensor(workspace / "feats" / first).shape == (128, 173)


def test_featurize_mfcc_mean(workspace, tmp_path):
    assert main(["featurize", "--manifest", str(workspace / "corpus" / "manifest.csv"),
                 "--kind", "mfcc-mean", "--out", str(tmp_path)]) == 0
    assert load_tensor(next(tmp_path.glob("*.sert"))).shape == (20,)


def test_cnn_training_is_reproducible(workspace):
    assert run_train(workspace, "cnn", "cnn_a") == 0
    assert run_train(workspace, "cnn", "cnn_b") == 0
    a, b = workspace / "cnn_a", workspace / "cnn_b"
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
    assert (a / "model.serc").read_bytes() == (b / "model.serc").read_bytes()
    run = json.loads((a / "run.json").read_text())
    assert run["formats"]["SERC"] == 1
    assert run["train_config"]["stages"] == [[32, 2]]


def test_seed_precedence(workspace, monkeypatch):
    monkeypatch.setenv("SER_SEED", "11")
    assert run_train(workspace, "lstm", "lstm_env") == 0
    assert json.loads((workspace / "lstm_env" / "run.json").read_text())["seed"] == 11
    assert run_train(workspace, "lstm", "lstm_flag", "--seed", "3") == 0
    assert json.loads((workspace / "lstm_flag" / "run.json").read_text())["seed"] == 3


def test_svm_train_and_eval(workspace, capsys):
    assert run_train(workspace, "svm", "svm") == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(workspace / "svm" / "model.svm"),
                 "--manifest", str(workspace / "corpus" / "manifest.csv"), "--split", "test",
                 "--features", str(workspace / "feats"), "--name", "SVM", "--out", str(workspace / "ev")]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("SVM ") and line.endswith(tuple("0123456789"))
    metrics = json.loads((workspace / "ev" / "metrics.json").read_text())
    assert len(metrics["confusion"]) == 8


def test_transfer_and_eval(workspace):
    assert run_train(workspace, "cnn", "base") == 0
    assert run_train(workspace, "cnn", "tl", "--pretrained", str(workspace / "base" / "model.serc"),
                     "--freeze", "stem") == 0
    assert main(["eval", "--checkpoint", str(workspace / "tl" / "model.serc"),
                 "--manifest", str(workspace / "corpus" / "manifest.csv"),
                 "--out", str(workspace / "ev_tl")]) == 0
    assert (workspace / "ev_tl" / "loss_curve.svg").read_text().count("<polyline") == 2


def test_eval_missing_or_bad_checkpoint(workspace, tmp_path, capsys):
    manifest = str(workspace / "corpus" / "manifest.csv")
    assert main(["eval", "--checkpoint", str(tmp_path / "none.serc"), "--manifest", manifest,
                 "--out", str(tmp_path)]) == 2
    junk = tmp_path / "junk.serc"
    junk.write_bytes(b"SERC\x09\x00\x00\x00")
    assert main(["eval", "--checkpoint", str(junk), "--manifest", manifest, "--out", str(tmp_path)]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
    assert main(["synth", "--bogus", "--out", "x"]) == 1
    assert "usage" in capsys.readouterr().err


def test_ingest_lists_bad_names(tmp_path, capsys):
    rav = tmp_path / "rav"
    sav = tmp_path / "sav"
    rav.mkdir()
    sav.mkdir()
    wav = write_wav(AudioClip(np.zeros(100), 22050))
    for emo in range(1, 9):
        (rav / f"03-01-{emo:02d}-01-01-01-01.wav").write_bytes(wav)
    (rav / "03-01.wav").write_bytes(wav)
    (sav / "DC_sa01.wav").write_bytes(wav)
    out = tmp_path / "m.csv"
    assert main(["ingest", "--ravdess", str(rav), "--savee", str(sav), "--out", str(out)]) == 2
    assert "03-01.wav" in capsys.readouterr().err
    assert len(Manifest.read(out)) == 9
    assert main(["ingest", "--ravdess", str(tmp_path / "missing"), "--out", str(out)]) == 2


def test_plot_outputs(workspace, tmp_path):
    wav = next((workspace / "corpus").glob("*.wav"))
    assert main(["plot", "--input", str(wav), "--out", str(tmp_path / "w.svg")]) == 0
    assert 'class="waveform"' in (tmp_path / "w.svg").read_text()
    sert = next((workspace / "feats").glob("*.sert"))
    assert main(["plot", "--input", str(sert), "--out", str(tmp_path / "s.svg")]) == 0
    assert 'width="519" height="384"' in (tmp_path / "s.svg").read_text()
    hist = tmp_path / "h.csv"
    hist.write_text("epoch,train_loss,val_loss,val_acc\n" + "".join(f"{e},1.0,1.1,0.5\n" for e in range(30)))
    assert main(["plot", "--input", str(hist), "--out", str(tmp_path / "h.svg")]) == 0
    assert (tmp_path / "h.svg").read_text().count('class="xtick"') == 30
    (tmp_path / "x.txt").write_text("?")
    assert main(["plot", "--input", str(tmp_path / "x.txt"), "--out", str(tmp_path / "x.svg")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ser", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout
