"""Dataset loading, per-fold training and cross-validated evaluation."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .config import RunConfig
from .dataset_io import BpRecord, Manifest, ManifestEntry, load_frames, load_landmarks
from .errors import DataError
from .estimator import Estimator, EstimatorOutput, build_model, group_labels, make_optimizer, train_step
from .evaluation import MetricReport, aggregate_folds, compute_metrics
from .sampler import FoldPlan, assign_group, make_folds, oversample_batches, shuffled_batches
from .slicer import make_slices
from .stm import StmTensor, build_stm, compute_istm, define_roi_track, mask_plan, mask_stm, read_stm, sample_seed

log = logging.getLogger(__name__)


def derive_seed(seed: int, *parts) -> int:
    digest = hashlib.sha256("\x00".join(str(p) for p in (seed, *parts)).encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def stm_from_entry(entry: ManifestEntry, fps: float = 30.0) -> StmTensor:
    """Prepared ``.stm`` file, or the full frames + landmarks pipeline."""
    if entry.is_prepared:
        stm = read_stm(entry.frames_path)
        if not stm.normalized:
            raise DataError(f"{entry.frames_path}: STM is not normalized")
        return stm
    frames = load_frames(entry.frames_path, fps)
    track = load_landmarks(entry.landmarks_path, frames.T)
    track.check_bounds(frames.width, frames.height)
    return build_stm(compute_istm(frames, define_roi_track(track)))


@dataclass
class Dataset:
    stms: dict[str, StmTensor]
    records: list[BpRecord]

    @property
    def ids(self) -> list[str]:
        return [r.sample_id for r in self.records]

    def record(self, sid: str) -> BpRecord:
        return self._by_id[sid]

    def __post_init__(self):
        self._by_id = {r.sample_id: r for r in self.records}


def load_dataset(manifest: Manifest) -> Dataset:
    stms = {e.sample_id: stm_from_entry(e) for e in manifest}
    return Dataset(stms, [e.record for e in manifest])


def clips_of(stm: StmTensor, cfg, sample_id: str = "") -> np.ndarray:
    """First ``n_clips`` clips, shape (n_clips, L, 12)."""
    batch = make_slices(stm, cfg.clip_length, sample_id)
    if batch.M < cfg.n_clips:
        raise DataError(
            f"sample {sample_id or '?'} has {stm.T} frames, fewer than "
            f"{cfg.n_clips} clips of {cfg.clip_length} frames"
        )
    return batch.clips[: cfg.n_clips]


def _batch_tensor(ds: Dataset, ids: Sequence[str], run: RunConfig, epoch: int | None) -> torch.Tensor:
    arrs = []
    for sid in ids:
        stm = ds.stms[sid]
        if epoch is not None and run.train.augment:
            rng = np.random.default_rng(sample_seed(run.seed, sid, epoch))
            stm = mask_stm(stm, mask_plan(stm.n_roi, stm.T, run.augment, rng))
        arrs.append(clips_of(stm, run.model, sid))
    return torch.tensor(np.stack(arrs), dtype=torch.float32)


@dataclass
class TrainResult:
    model: Estimator
    curve: list[tuple[int, float, float, float]] = field(default_factory=list)


def train_model(
    run: RunConfig,
    ds: Dataset,
    train_ids: Sequence[str],
    target: str,
    seed: int,
    on_log: Callable[[int, float, float, float], None] | None = None,
) -> TrainResult:
    model = build_model(run.model, target, derive_seed(seed, "init"))
    opt = make_optimizer(model, run.train.optim())
    bounds = run.groups.for_target(target)
    truth = {sid: ds.record(sid).value(target) for sid in train_ids}
    groups: list[list[str]] = [[] for _ in range(4)]
    for sid in train_ids:
        groups[assign_group(truth[sid], bounds) - 1].append(sid)

    curve = []
    step, epoch = 0, 0
    while step < run.train.steps:
        ep_seed = derive_seed(seed, "epoch", epoch)
        if run.train.oversample:
            batches = oversample_batches(groups, run.train.batch_size, ep_seed)
        else:
            batches = shuffled_batches(list(train_ids), run.train.batch_size, ep_seed)
        for ids in batches:
            if step >= run.train.steps:
                break
            x = _batch_tensor(ds, ids, run, epoch)
            y = torch.tensor([truth[s] for s in ids], dtype=torch.float32)
            res = train_step(model, opt, x, y, group_labels(y.tolist(), bounds))
            if step % run.train.log_every == 0 or step == run.train.steps - 1:
                curve.append((step, res.loss, res.ce, res.mae))
                if on_log:
                    on_log(step, res.loss, res.ce, res.mae)
            step += 1
        epoch += 1
    model.eval()
    return TrainResult(model, curve)


def predict(model: Estimator, ds: Dataset, ids: Sequence[str], run: RunConfig, chunk: int = 64) -> list[EstimatorOutput]:
    out: list[EstimatorOutput] = []
    for start in range(0, len(ids), chunk):
        out += model.predict(_batch_tensor(ds, ids[start : start + chunk], run, None))
    return out


@dataclass
class FoldResult:
    fold: int
    model: Estimator
    val_ids: list[str]
    outputs: list[EstimatorOutput]
    report: MetricReport
    curve: list


@dataclass
class CvResult:
    target: str
    plan: FoldPlan
    folds: list[FoldResult]
    pooled: MetricReport

    def pooled_predictions(self) -> tuple[list[str], list[float]]:
        ids, preds = [], []
        for f in self.folds:
            ids += f.val_ids
            preds += [o.fused for o in f.outputs]
        return ids, preds


def cross_validate(run: RunConfig, ds: Dataset, target: str, on_log=None) -> CvResult:
    bounds = run.groups.for_target(target)
    records = [(r.sample_id, assign_group(r.value(target), bounds)) for r in ds.records]
    k = run.train.folds
    plan = make_folds(records, k=k, seed=derive_seed(run.seed, "folds", target))
    folds = []
    for c in range(k):
        train_ids, val_ids = plan.training_ids(c), plan.validation_ids(c)
        log.info("%s fold %d: %d train / %d validation", target, c, len(train_ids), len(val_ids))
        cb = (lambda s, l, ce, m, c=c: on_log(c, s, l, ce, m)) if on_log else None
        res = train_model(run, ds, train_ids, target, derive_seed(run.seed, "train", target, c), cb)
        outputs = predict(res.model, ds, val_ids, run)
        truths = [ds.record(s).value(target) for s in val_ids]
        report = compute_metrics([o.fused for o in outputs], truths, target=target, fold=c)
        folds.append(FoldResult(c, res.model, val_ids, outputs, report, res.curve))
    pooled = aggregate_folds([f.report for f in folds], k=k)
    return CvResult(target, plan, folds, pooled)
