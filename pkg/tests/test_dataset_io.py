import numpy as np
import pytest
from PIL import Image

from stmbp.dataset_io import (
    LandmarkTrack,
    Manifest,
    ManifestEntry,
    load_frames,
    load_landmarks,
    load_manifest,
    write_landmarks,
    write_manifest,
    write_raw_frames,
)
from stmbp.errors import DataError

from conftest import face_landmarks


def _manifest_text(rows):
    return "".join("\t".join(map(str, r)) + "\n" for r in rows)


@pytest.fixture
def data_dir(tmp_path):
    for name in ("a.raw", "a.csv", "b.raw", "b.csv"):
        (tmp_path / name).write_text("")
    return tmp_path


def test_manifest_two_rows(data_dir):
    p = data_dir / "m.tsv"
    p.write_text("# comment\n" + _manifest_text([("a", "a.raw", "a.csv", 120, 80), ("b", "b.raw", "b.csv", 135.5, 88)]))
    m = load_manifest(p)
    assert [e.sample_id for e in m] == ["a", "b"]
    assert m.entries[1].sbp == 135.5
    assert m.entries[0].frames_path == data_dir / "a.raw"


def test_manifest_dbp_above_sbp(data_dir):
    p = data_dir / "m.tsv"
    p.write_text(_manifest_text([("a", "a.raw", "a.csv", 120, 130)]))
    with pytest.raises(DataError, match="dbp >= sbp"):
        load_manifest(p)


def test_manifest_empty_warns(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("")
    with pytest.warns(UserWarning):
        m = load_manifest(p)
    assert len(m) == 0


@pytest.mark.parametrize(
    "row, msg",
    [
        (("a", "a.raw", "a.csv", 260, 80), "outside"),
        (("a", "a.raw", "a.csv", 120, 30), "outside"),
        (("a", "a.raw", "a.csv", "x", 80), "non-numeric"),
        (("a", "a.raw", "a.csv", 120), "5 tab-separated"),
        (("a", "missing.raw", "a.csv", 120, 80), "does not exist"),
    ],
)
def test_manifest_errors_name_line(data_dir, row, msg):
    p = data_dir / "m.tsv"
    p.write_text("# header\n" + _manifest_text([row]))
    with pytest.raises(DataError, match=msg) as exc:
        load_manifest(p)
    assert "m.tsv:2" in str(exc.value)


def test_manifest_duplicate_id(data_dir):
    p = data_dir / "m.tsv"
    p.write_text(_manifest_text([("a", "a.raw", "a.csv", 120, 80), ("a", "b.raw", "b.csv", 121, 80)]))
    with pytest.raises(DataError, match="duplicate"):
        load_manifest(p)


def test_manifest_round_trip(data_dir):
    m = Manifest(
        [
            ManifestEntry("a", data_dir / "a.raw", data_dir / "a.csv", 120.25, 80.5),
            ManifestEntry("b", data_dir / "b.raw", None, 140.0, 95.125),
        ]
    )
    p = data_dir / "out.tsv"
    write_manifest(m, p, header="run.seed=1")
    assert load_manifest(p) == m


def test_landmarks_450_rows(tmp_path):
    track = LandmarkTrack(np.repeat(face_landmarks()[None], 450, axis=0))
    p = tmp_path / "lm.csv"
    write_landmarks(track, p)
    loaded = load_landmarks(p, 450)
    assert len(loaded) == 450
    np.testing.assert_array_equal(loaded.points, track.points)


def test_landmarks_length_mismatch(tmp_path):
    p = tmp_path / "lm.csv"
    write_landmarks(LandmarkTrack(np.repeat(face_landmarks()[None], 10, axis=0)), p)
    with pytest.raises(DataError, match="length mismatch"):
        load_landmarks(p, 450)


def test_landmarks_malformed_row(tmp_path):
    p = tmp_path / "lm.csv"
    p.write_text(",".join(["1.0"] * 135) + "\n")
    with pytest.raises(DataError, match="malformed row"):
        load_landmarks(p, 1)


def test_landmarks_non_numeric(tmp_path):
    p = tmp_path / "lm.csv"
    p.write_text(",".join(["1.0"] * 135 + ["abc"]) + "\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_landmarks(p, 1)


def test_landmark_bounds():
    track = LandmarkTrack(face_landmarks()[None])
    track.check_bounds(200, 200)
    with pytest.raises(DataError, match="outside"):
        track.check_bounds(120, 120)


def test_frames_dir_full_hd(tmp_path):
    for i in range(3):
        Image.fromarray(np.full((1080, 1920, 3), i, dtype=np.uint8)).save(tmp_path / f"{i:06d}.png")
    seq = load_frames(tmp_path)
    assert (seq.T, seq.height, seq.width) == (3, 1080, 1920)
    assert seq.frames[2, 0, 0, 0] == 2


def test_raw_blob_450_full_hd_frames(tmp_path):
    # sparse file: header + 450 x 1080 x 1920 x 3 bytes, never materialized
    p = tmp_path / "v.raw"
    T, H, W = 450, 1080, 1920
    with open(p, "wb") as fh:
        fh.write(np.array([T, H, W], dtype="<u4").tobytes())
        fh.truncate(12 + T * H * W * 3)
    seq = load_frames(p)
    assert (seq.T, seq.height, seq.width) == (450, 1080, 1920)


def test_single_frame_dir(tmp_path):
    Image.fromarray(np.zeros((4, 5, 3), dtype=np.uint8)).save(tmp_path / "000000.png")
    assert load_frames(tmp_path).T == 1


def test_mixed_size_frames(tmp_path):
    Image.fromarray(np.zeros((4, 5, 3), dtype=np.uint8)).save(tmp_path / "000000.png")
    Image.fromarray(np.zeros((5, 5, 3), dtype=np.uint8)).save(tmp_path / "000001.png")
    with pytest.raises(DataError, match="dimension mismatch"):
        load_frames(tmp_path)


def test_raw_round_trip_and_truncation(tmp_path):
    frames = np.random.default_rng(0).integers(0, 256, (3, 4, 5, 3), dtype=np.uint8)
    p = tmp_path / "v.raw"
    write_raw_frames(frames, p)
    np.testing.assert_array_equal(np.asarray(load_frames(p).frames), frames)
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(DataError, match="expected"):
        load_frames(p)


def test_unreadable_image(tmp_path):
    (tmp_path / "000000.png").write_bytes(b"not a png")
    with pytest.raises(DataError, match="unreadable"):
        load_frames(tmp_path)
