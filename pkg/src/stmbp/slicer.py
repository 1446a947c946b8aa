"""Per-frame flattening of the STM and cutting into fixed-length clips."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .stm import StmTensor


@dataclass
class SliceBatch:
    """``clips`` has shape (M, L, n_roi * 3); clip m covers frames [m*L, (m+1)*L)."""

    clips: np.ndarray
    clip_length: int
    sample_id: str = ""

    @property
    def M(self) -> int:
        return self.clips.shape[0]


def flatten_frame(stm: StmTensor, t: int) -> np.ndarray:
    """Frame ``t`` as [roi0.Y, roi0.U, roi0.V, roi1.Y, ...]."""
    if not 0 <= t < stm.T:
        raise DataError(f"frame index {t} out of range for T={stm.T}")
    return stm.values[:, t, :].reshape(-1).copy()


def flatten(stm: StmTensor) -> np.ndarray:
    """All frames at once: (T, n_roi * 3), row t equal to ``flatten_frame(stm, t)``."""
    return stm.values.transpose(1, 0, 2).reshape(stm.T, -1)


def unflatten(rows: np.ndarray, n_roi: int) -> np.ndarray:
    """Inverse of :func:`flatten` on the values: (T, n_roi*3) -> (n_roi, T, 3)."""
    return rows.reshape(rows.shape[0], n_roi, 3).transpose(1, 0, 2)


def n_clips(T: int, L: int) -> int:
    if L < 1:
        raise DataError(f"clip length must be >= 1, got {L}")
    if T < L:
        raise DataError(f"video shorter than clip length ({T} < {L} frames)")
    return T // L


def make_slices(stm: StmTensor, L: int, sample_id: str = "") -> SliceBatch:
    M = n_clips(stm.T, L)
    rows = flatten(stm)[: M * L]
    return SliceBatch(rows.reshape(M, L, rows.shape[1]).copy(), L, sample_id)
