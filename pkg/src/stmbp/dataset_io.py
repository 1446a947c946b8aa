"""On-disk formats: dataset manifests, landmark CSVs and raw frame sequences.

Manifest: UTF-8 text, one record per line,
``sample_id<TAB>frames_path<TAB>landmarks_path<TAB>sbp<TAB>dbp``; ``#`` starts
a comment. Relative paths resolve against the manifest's directory. A
``landmarks_path`` of ``-`` marks a prepared sample whose ``frames_path``
points at an ``.stm`` file.

Landmarks: CSV without header, one row per frame, 136 numeric columns
``x1,y1,...,x68,y68`` in pixel coordinates.

Frames: a directory of image files sorted lexicographically (``000000.png``,
...), or a raw blob with a little-endian ``u32 T, u32 H, u32 W`` header
followed by ``T*H*W*3`` bytes of RGB data.
"""

from __future__ import annotations

import csv
import math
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

BP_MIN = 40.0
BP_MAX = 250.0
N_LANDMARKS = 68
NO_PATH = "-"
IMAGE_SUFFIXES = (".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff", ".ppm")
RAW_HEADER = struct.Struct("<III")


@dataclass(frozen=True)
class BpRecord:
    sample_id: str
    sbp: float
    dbp: float

    def value(self, target: str) -> float:
        t = target.upper()
        if t == "SBP":
            return self.sbp
        if t == "DBP":
            return self.dbp
        raise ValueError(f"unknown target {target!r}")


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    frames_path: Path
    landmarks_path: Path | None
    sbp: float
    dbp: float

    @property
    def is_prepared(self) -> bool:
        return self.landmarks_path is None

    @property
    def record(self) -> BpRecord:
        return BpRecord(self.sample_id, self.sbp, self.dbp)


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.sample_id: e for e in self.entries}


@dataclass
class FrameSequence:
    """T frames of shape (H, W, 3), uint8 RGB. ``frames`` may be a memmap."""

    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise DataError(f"frames must have shape (T, H, W, 3), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise DataError("frame sequence is empty")
        if not self.fps > 0:
            raise DataError(f"fps must be positive, got {self.fps}")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class LandmarkTrack:
    """Per-frame 68-point landmarks, array of shape (T, 68, 2) holding (x, y)."""

    points: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 3 or self.points.shape[1:] != (N_LANDMARKS, 2):
            raise DataError(f"landmarks must have shape (T, 68, 2), got {self.points.shape}")

    def __len__(self):
        return self.points.shape[0]

    def check_bounds(self, width: int, height: int) -> None:
        x, y = self.points[..., 0], self.points[..., 1]
        bad = (x < 0) | (x > width) | (y < 0) | (y > height)
        if bad.any():
            t = int(np.argwhere(bad.any(axis=1))[0, 0])
            raise DataError(f"landmarks of frame {t} fall outside the {width}x{height} frame")


def check_bp(sbp: float, dbp: float) -> None:
    if not (math.isfinite(sbp) and math.isfinite(dbp)):
        raise DataError(f"non-finite blood pressure ({sbp}, {dbp})")
    if dbp >= sbp:
        raise DataError(f"dbp >= sbp ({dbp} >= {sbp})")
    if dbp < BP_MIN or sbp > BP_MAX:
        raise DataError(f"blood pressure ({sbp}/{dbp}) outside [{BP_MIN}, {BP_MAX}] mmHg")


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw)
    return p if p.is_absolute() else (base / p)


def load_manifest(path, check_paths: bool = True) -> Manifest:
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
            sid, frames, landmarks, sbp_s, dbp_s = parts
            if not sid:
                raise DataError(f"{path}:{lineno}: empty sample_id")
            try:
                sbp, dbp = float(sbp_s), float(dbp_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric blood pressure") from None
            try:
                check_bp(sbp, dbp)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if sid in seen:
                raise DataError(f"{path}:{lineno}: duplicate sample_id {sid!r}")
            seen.add(sid)
            entry = ManifestEntry(
                sample_id=sid,
                frames_path=_resolve(base, frames),
                landmarks_path=None if landmarks == NO_PATH else _resolve(base, landmarks),
                sbp=sbp,
                dbp=dbp,
            )
            if check_paths:
                for p in (entry.frames_path, entry.landmarks_path):
                    if p is not None and not p.exists():
                        raise DataError(f"{path}:{lineno}: path does not exist: {p}")
            entries.append(entry)
    if not entries:
        warnings.warn(f"manifest {path} contains no entries", stacklevel=2)
    return Manifest(entries)


def _rel(p: Path, base: Path) -> str:
    try:
        return os.path.relpath(p, base)
    except ValueError:
        return str(p)


def write_manifest(manifest: Manifest, path, header: str | None = None) -> None:
    path = Path(path)
    base = path.parent
    lines = []
    if header:
        lines.extend(f"# {h}" if h else "#" for h in header.splitlines())
    for e in manifest.entries:
        lm = NO_PATH if e.landmarks_path is None else _rel(e.landmarks_path, base)
        lines.append("\t".join([e.sample_id, _rel(e.frames_path, base), lm, repr(e.sbp), repr(e.dbp)]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_landmarks(path, expected_T: int) -> LandmarkTrack:
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2 * N_LANDMARKS:
                raise DataError(f"{path}:{lineno}: malformed row, expected 136 columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    if len(rows) != expected_T:
        raise DataError(f"{path}: length mismatch, {len(rows)} rows for {expected_T} frames")
    pts = np.asarray(rows, dtype=np.float64).reshape(len(rows), N_LANDMARKS, 2)
    if not np.isfinite(pts).all():
        raise DataError(f"{path}: non-finite landmark coordinate")
    return LandmarkTrack(pts)


def write_landmarks(track: LandmarkTrack, path) -> None:
    flat = track.points.reshape(len(track), -1)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in flat])


def load_frames(path, fps: float = 30.0) -> FrameSequence:
    path = Path(path)
    if path.is_dir():
        return _load_frame_dir(path, fps)
    return _load_raw_frames(path, fps)


def _load_frame_dir(path: Path, fps: float) -> FrameSequence:
    from PIL import Image

    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"{path}: no image files")
    frames = None
    for i, f in enumerate(files):
        try:
            with Image.open(f) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except OSError as exc:
            raise DataError(f"{f}: unreadable image ({exc})") from None
        if frames is None:
            frames = np.empty((len(files),) + arr.shape, dtype=np.uint8)
        elif arr.shape != frames.shape[1:]:
            raise DataError(
                f"{f}: dimension mismatch, {arr.shape[1]}x{arr.shape[0]} vs "
                f"{frames.shape[2]}x{frames.shape[1]}"
            )
        frames[i] = arr
    return FrameSequence(frames, fps)


def _load_raw_frames(path: Path, fps: float) -> FrameSequence:
    try:
        with open(path, "rb") as fh:
            head = fh.read(RAW_HEADER.size)
    except OSError as exc:
        raise DataError(f"{path}: unreadable ({exc})") from None
    if len(head) < RAW_HEADER.size:
        raise DataError(f"{path}: truncated raw frame header")
    T, H, W = RAW_HEADER.unpack(head)
    need = RAW_HEADER.size + T * H * W * 3
    size = path.stat().st_size
    if size != need:
        raise DataError(f"{path}: expected {need} bytes for {T}x{H}x{W} frames, found {size}")
    if T == 0 or H == 0 or W == 0:
        raise DataError(f"{path}: empty raw frame blob")
    frames = np.memmap(path, dtype=np.uint8, mode="r", offset=RAW_HEADER.size, shape=(T, H, W, 3))
    return FrameSequence(frames, fps)


def write_raw_frames(frames: np.ndarray, path) -> None:
    frames = np.ascontiguousarray(frames, dtype=np.uint8)
    T, H, W, _ = frames.shape
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(T, H, W))
        fh.write(frames.tobytes())
