"""Spatial-temporal map construction.

Facial landmarks define four skin ROIs per frame; averaging each ROI gives the
initial map (ROI x time x RGB). Augmentation masks a short span of it, the YUV
matrix is applied to the ROI means, and each channel is scaled to [0, 1].
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import FrameSequence, LandmarkTrack
from .errors import ConfigError, DataError

N_ROI = 4
ROI_NAMES = ("forehead", "left_cheek", "right_cheek", "chin")

# 0-based indices in the iBUG 68-point scheme. Seven anchors in total.
BROW_OUTER_R = 17
BROW_OUTER_L = 26
EYE_OUTER_R = 36
EYE_OUTER_L = 45
NOSE_WING_R = 31
NOSE_WING_L = 35
CHIN = 8
ANCHORS = (BROW_OUTER_R, BROW_OUTER_L, EYE_OUTER_R, EYE_OUTER_L, NOSE_WING_R, NOSE_WING_L, CHIN)

FOREHEAD_HEIGHT = 0.6  # x eye-to-brow distance, extrapolated above the brow line
CHEEK_TOP = 0.25  # fraction of eye-line -> nose-wing height skipped below the eye
CHIN_BAND = (0.65, 0.9)  # fractions of nose-wing -> chin height

YUV_MATRIX = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.169, -0.331, 0.5],
        [0.5, -0.419, -0.081],
    ]
)
# channel ranges of YUV_MATRIX applied to RGB in [0, 255]
YUV_LOW = np.array([0.0, -127.5, -127.5])
YUV_SPAN = np.array([255.0, 255.0, 255.0])


def _rect(x0, y0, x1, y1) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def define_rois(landmarks: np.ndarray) -> tuple[np.ndarray, ...]:
    """Four axis-aligned ROI quads (forehead, left cheek, right cheek, chin) for one frame.

    ``landmarks`` is (68, 2) in image coordinates (y grows downward). "Left"
    and "right" are image sides.
    """
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.shape != (68, 2):
        raise DataError(f"expected (68, 2) landmarks, got {pts.shape}")
    anchors = pts[list(ANCHORS)]
    centred = anchors - anchors.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-9 * max(1.0, np.abs(anchors).max())) < 2:
        raise DataError("degenerate ROI: anchor landmarks are collinear")

    brow_y = 0.5 * (pts[BROW_OUTER_R, 1] + pts[BROW_OUTER_L, 1])
    eye_y = 0.5 * (pts[EYE_OUTER_R, 1] + pts[EYE_OUTER_L, 1])
    nose_y = 0.5 * (pts[NOSE_WING_R, 1] + pts[NOSE_WING_L, 1])
    chin_y = pts[CHIN, 1]
    eye_brow = eye_y - brow_y
    cheek_h = nose_y - eye_y
    lower_h = chin_y - nose_y
    if eye_brow <= 0 or cheek_h <= 0 or lower_h <= 0:
        raise DataError("degenerate ROI: landmarks are not in brow > eye > nose > chin order")

    forehead = _rect(pts[BROW_OUTER_R, 0], brow_y - FOREHEAD_HEIGHT * eye_brow, pts[BROW_OUTER_L, 0], brow_y)
    cheek_top = eye_y + CHEEK_TOP * cheek_h
    left = _rect(pts[EYE_OUTER_R, 0], cheek_top, pts[NOSE_WING_R, 0], nose_y)
    right = _rect(pts[NOSE_WING_L, 0], cheek_top, pts[EYE_OUTER_L, 0], nose_y)
    chin = _rect(
        pts[NOSE_WING_R, 0], nose_y + CHIN_BAND[0] * lower_h, pts[NOSE_WING_L, 0], nose_y + CHIN_BAND[1] * lower_h
    )
    polys = (forehead, left, right, chin)
    for name, poly in zip(ROI_NAMES, polys):
        if polygon_area(poly) <= 0:
            raise DataError(f"degenerate ROI: {name} polygon has zero area")
    return polys


@dataclass
class RoiSet:
    """Per-frame ROI polygons: ``polygons[t][n]`` is a (V, 2) vertex array."""

    polygons: list[tuple[np.ndarray, ...]]

    def __len__(self):
        return len(self.polygons)


def define_roi_track(track: LandmarkTrack) -> RoiSet:
    return RoiSet([define_rois(frame) for frame in track.points])


def polygon_mask(poly: np.ndarray, height: int, width: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Pixels whose centre (j + 0.5, i + 0.5) lies inside ``poly`` (even-odd rule).

    Returns the mask restricted to the polygon's bounding box and the box's
    (row, col) origin.
    """
    poly = np.asarray(poly, dtype=np.float64)
    x0 = max(int(np.floor(poly[:, 0].min() - 0.5)), 0)
    x1 = min(int(np.ceil(poly[:, 0].max() - 0.5)) + 1, width)
    y0 = max(int(np.floor(poly[:, 1].min() - 0.5)), 0)
    y1 = min(int(np.ceil(poly[:, 1].max() - 0.5)) + 1, height)
    if x1 <= x0 or y1 <= y0:
        return np.zeros((0, 0), dtype=bool), (y0, x0)
    cx = np.arange(x0, x1) + 0.5
    cy = (np.arange(y0, y1) + 0.5)[:, None]
    inside = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    xa, ya = poly[:, 0], poly[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    for ax, ay, bx, by in zip(xa, ya, xb, yb):
        if ay == by:
            continue
        crosses = (ay > cy) != (by > cy)
        x_at = ax + (cy - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (cx < x_at)
    return inside, (y0, x0)


@dataclass
class IstmTensor:
    """ROI channel means, shape (n_roi, T, 3), RGB order on the [0, 255] scale."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise DataError(f"ISTM must have shape (n_roi, T, 3), got {self.values.shape}")
        if self.mask is None:
            self.mask = np.zeros(self.values.shape[:2], dtype=bool)

    @property
    def T(self) -> int:
        return self.values.shape[1]


@dataclass
class StmTensor:
    """YUV map of shape (n_roi, T, 3) plus the augmentation mask."""

    values: np.ndarray
    mask: np.ndarray
    normalized: bool = False

    @property
    def n_roi(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


def compute_istm(frames: FrameSequence, rois: RoiSet) -> IstmTensor:
    if len(rois) != frames.T:
        raise DataError(f"{len(rois)} ROI frames for a {frames.T}-frame sequence")
    H, W = frames.height, frames.width
    n_roi = len(rois.polygons[0])
    out = np.empty((n_roi, frames.T, 3), dtype=np.float64)
    for t, polys in enumerate(rois.polygons):
        frame = frames.frames[t]
        for n, poly in enumerate(polys):
            inside, (r0, c0) = polygon_mask(poly, H, W)
            count = int(inside.sum())
            if count == 0:
                name = ROI_NAMES[n] if n < len(ROI_NAMES) else str(n)
                raise DataError(f"ROI {name} has no pixels in frame {t}")
            patch = frame[r0 : r0 + inside.shape[0], c0 : c0 + inside.shape[1]]
            out[n, t] = patch[inside].sum(axis=0, dtype=np.float64) / count
    return IstmTensor(out)


@dataclass
class AugmentConfig:
    mask_probability: float = 0.5
    max_time_mask_fraction: float = 0.1
    max_roi_masked: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.mask_probability <= 1.0:
            raise ConfigError(f"mask_probability must be in [0, 1], got {self.mask_probability}")
        if not 0.0 <= self.max_time_mask_fraction <= 1.0:
            raise ConfigError(f"max_time_mask_fraction must be in [0, 1], got {self.max_time_mask_fraction}")
        if not 0 <= self.max_roi_masked <= N_ROI - 1:
            raise ConfigError(f"max_roi_masked must be in [0, {N_ROI - 1}], got {self.max_roi_masked}")


def sample_seed(global_seed: int, sample_id: str, epoch: int = 0) -> int:
    """Per-sample augmentation seed, independent of processing order."""
    digest = hashlib.sha256(f"{sample_id}\x00{epoch}".encode()).digest()
    return (int(global_seed) ^ int.from_bytes(digest[:8], "little")) & (2**63 - 1)


def mask_plan(n_roi: int, T: int, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Boolean (n_roi, T) mask: one contiguous time span on up to ``max_roi_masked`` ROIs."""
    mask = np.zeros((n_roi, T), dtype=bool)
    max_span = int(np.floor(cfg.max_time_mask_fraction * T))
    if cfg.max_roi_masked == 0 or max_span == 0 or cfg.mask_probability == 0.0:
        return mask
    if rng.random() >= cfg.mask_probability:
        return mask
    k = int(rng.integers(1, min(cfg.max_roi_masked, n_roi) + 1))
    rois = rng.choice(n_roi, size=k, replace=False)
    span = int(rng.integers(1, max_span + 1))
    start = int(rng.integers(0, T - span + 1))
    mask[rois, start : start + span] = True
    return mask


def random_mask(istm: IstmTensor, cfg: AugmentConfig, rng: np.random.Generator | None = None) -> IstmTensor:
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    n_roi, T, _ = istm.values.shape
    mask = mask_plan(n_roi, T, cfg, rng)
    if not mask.any():
        return IstmTensor(istm.values.copy(), istm.mask.copy())
    values = istm.values.copy()
    values[mask] = 0.0
    return IstmTensor(values, istm.mask | mask)


def rgb_to_yuv(istm: IstmTensor) -> StmTensor:
    return StmTensor(istm.values @ YUV_MATRIX.T, istm.mask.copy(), normalized=False)


def normalize(stm: StmTensor) -> StmTensor:
    if stm.normalized:
        raise DataError("STM is already normalized")
    return StmTensor((stm.values - YUV_LOW) / YUV_SPAN, stm.mask.copy(), normalized=True)


def denormalize(stm: StmTensor) -> StmTensor:
    if not stm.normalized:
        raise DataError("STM is not normalized")
    return StmTensor(stm.values * YUV_SPAN + YUV_LOW, stm.mask.copy(), normalized=False)


# normalized YUV image of an RGB cell zeroed by masking
MASKED_VALUE = (np.zeros(3) - YUV_LOW) / YUV_SPAN


def mask_stm(stm: StmTensor, mask: np.ndarray) -> StmTensor:
    """Apply a mask to a normalized STM; same result as masking the ISTM first."""
    if not stm.normalized:
        raise DataError("mask_stm expects a normalized STM")
    values = stm.values.copy()
    values[mask] = MASKED_VALUE
    return StmTensor(values, stm.mask | mask, normalized=True)


def build_stm(istm: IstmTensor) -> StmTensor:
    return normalize(rgb_to_yuv(istm))


# --- serialization -------------------------------------------------------

STM_HEADER = struct.Struct("<IIIB")


def write_stm(stm: StmTensor, path) -> None:
    path = Path(path)
    n_roi, T, C = stm.values.shape
    body = np.ascontiguousarray(stm.values, dtype="<f4").tobytes()
    path.write_bytes(STM_HEADER.pack(n_roi, T, C, int(stm.normalized)) + body)
    Path(str(path) + ".mask").write_bytes(np.ascontiguousarray(stm.mask, dtype=np.uint8).tobytes())


def read_stm(path) -> StmTensor:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: unreadable ({exc})") from None
    if len(raw) < STM_HEADER.size:
        raise DataError(f"{path}: truncated STM header")
    n_roi, T, C, flag = STM_HEADER.unpack_from(raw)
    if C != 3:
        raise DataError(f"{path}: expected 3 channels, got {C}")
    need = STM_HEADER.size + n_roi * T * C * 4
    if len(raw) != need:
        raise DataError(f"{path}: expected {need} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=STM_HEADER.size).reshape(n_roi, T, C).astype(np.float64)
    mask_path = Path(str(path) + ".mask")
    if mask_path.exists():
        m = np.frombuffer(mask_path.read_bytes(), dtype=np.uint8)
        if m.size != n_roi * T:
            raise DataError(f"{mask_path}: expected {n_roi * T} bytes, found {m.size}")
        mask = m.reshape(n_roi, T).astype(bool)
    else:
        mask = np.zeros((n_roi, T), dtype=bool)
    return StmTensor(values, mask, normalized=bool(flag))


__all__ = [
    "AugmentConfig",
    "IstmTensor",
    "RoiSet",
    "StmTensor",
    "build_stm",
    "compute_istm",
    "define_roi_track",
    "define_rois",
    "denormalize",
    "mask_plan",
    "mask_stm",
    "normalize",
    "random_mask",
    "read_stm",
    "rgb_to_yuv",
    "sample_seed",
    "write_stm",
]
