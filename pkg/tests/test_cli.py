import csv

import numpy as np
import pytest

from stmbp.cli import build_parser, main
from stmbp.dataset_io import LandmarkTrack, load_manifest, write_landmarks, write_raw_frames
from stmbp.stm import read_stm

from conftest import face_landmarks

FAST = [
    "--preset", "tiny",
    "--set", "model.clip_length=30",
    "--set", "model.n_clips=3",
    "--set", "train.steps=4",
    "--set", "train.batch_size=8",
    "--set", "train.log_every=2",
]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--set", "synth.n_samples=60", "--set", "synth.T=90", "--seed", "1"]) == 0
    return out


def _train(out, manifest, *extra):
    return main(["train", "--manifest", str(manifest), "--out", str(out), *FAST, *extra])


def test_synth_writes_manifest(synth_dir):
    m = load_manifest(synth_dir / "manifest.tsv")
    assert len(m) == 60 and all(e.is_prepared for e in m)
    assert read_stm(m.entries[0].frames_path).T == 90


def test_train_rerun_byte_identical(tmp_path, synth_dir):
    manifest = synth_dir / "manifest.tsv"
    assert _train(tmp_path / "a", manifest, "--folds", "2", "--seed", "3") == 0
    assert _train(tmp_path / "b", manifest, "--folds", "2", "--seed", "3") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_train_five_folds_artifacts(tmp_path, synth_dir, capsys):
    assert _train(tmp_path, synth_dir / "manifest.tsv", "--folds", "5", "--target", "SBP") == 0
    assert sorted(p.name for p in tmp_path.glob("*.ckpt")) == [f"SBP_fold{c}.ckpt" for c in range(5)]
    with open(tmp_path / "metrics.csv") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    assert rows[0] == ["target", "fold", "n", "sd", "rmse", "mae"]
    assert [r[1] for r in rows[1:]] == ["0", "1", "2", "3", "4", "aggregate"] and rows[-1][2] == "60"
    assert (tmp_path / "bland_altman_SBP.csv").exists() and (tmp_path / "folds_SBP.tsv").exists()
    assert "SBP: pooled n=60" in capsys.readouterr().out


def test_predict_and_evaluate(tmp_path, synth_dir, capsys):
    manifest = synth_dir / "manifest.tsv"
    assert _train(tmp_path, manifest, "--folds", "2") == 0
    capsys.readouterr()
    sample = load_manifest(manifest).entries[0].frames_path
    ckpts = ["--checkpoint", str(tmp_path / "SBP_fold0.ckpt"), "--checkpoint", str(tmp_path / "DBP_fold0.ckpt")]
    assert main(["predict", *ckpts, "--sample", str(sample)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "sample_id\ttarget\tfused\treg\tgroup\tprobs"
    assert [ln.split("\t")[1] for ln in lines[1:]] == ["DBP", "SBP"]
    probs = [float(p) for p in lines[1].split("\t")[5].split(",")]
    assert len(probs) == 4 and abs(sum(probs) - 1) < 1e-5
    assert main(["evaluate", *ckpts, "--manifest", str(manifest), "--out", str(tmp_path / "eval")]) == 0
    assert (tmp_path / "eval" / "metrics.csv").exists()


def test_config_error_exit_code(tmp_path, synth_dir):
    assert _train(tmp_path, synth_dir / "manifest.tsv", "--set", "train.batch_size=6") == 2


def test_corrupt_checkpoint_exit_code(tmp_path, synth_dir, capsys):
    assert _train(tmp_path, synth_dir / "manifest.tsv", "--folds", "2", "--target", "DBP") == 0
    ck = tmp_path / "DBP_fold0.ckpt"
    raw = bytearray(ck.read_bytes())
    raw[-1] ^= 1
    ck.write_bytes(bytes(raw))
    sample = load_manifest(synth_dir / "manifest.tsv").entries[0].frames_path
    assert main(["predict", "--checkpoint", str(ck), "--sample", str(sample)]) == 1
    assert "byte offset" in capsys.readouterr().err


def test_prepare_reports_missing_landmarks(tmp_path, capsys):
    rng = np.random.default_rng(0)
    T = 6
    rows = []
    for sid in ("ok", "nolm"):
        frames = rng.integers(60, 200, (T, 200, 200, 3), dtype=np.uint8)
        write_raw_frames(frames, tmp_path / f"{sid}.raw")
        rows.append(f"{sid}\t{sid}.raw\t{sid}.csv\t121\t79\n")
    write_landmarks(LandmarkTrack(np.repeat(face_landmarks()[None], T, axis=0)), tmp_path / "ok.csv")
    (tmp_path / "m.tsv").write_text("".join(rows))
    out = tmp_path / "prep"
    assert main(["prepare", "--manifest", str(tmp_path / "m.tsv"), "--out", str(out)]) == 1
    assert "nolm" in capsys.readouterr().err
    index = load_manifest(out / "index.tsv")
    assert [e.sample_id for e in index] == ["ok"]
    stm = read_stm(index.entries[0].frames_path)
    assert stm.values.shape == (4, T, 3) and stm.normalized
    first = (out / "stm" / "ok.stm").read_bytes()
    main(["prepare", "--manifest", str(tmp_path / "m.tsv"), "--out", str(out)])
    assert (out / "stm" / "ok.stm").read_bytes() == first


@pytest.mark.parametrize(
    "argv, verbose",
    [(["-v", "synth", "--out", "x"], True), (["synth", "--out", "x", "-v"], True), (["synth", "--out", "x"], False)],
)
def test_verbose_flag_position(argv, verbose):
    assert build_parser().parse_args(argv).verbose is verbose
