"""Error metrics and Bland-Altman agreement data.

All statistics are taken over the signed error ``e = pred - truth``. SD is the
population standard deviation (1/N). Sums use ``math.fsum`` so results do not
depend on sample order, which makes pooled fold metrics equal the whole-set
metrics exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

LOA_Z = 1.96


@dataclass(frozen=True)
class MetricReport:
    sd: float
    rmse: float
    mae: float
    n: int
    target: str = ""
    fold: str = "aggregate"
    errors: tuple[float, ...] = field(default=(), repr=False, compare=False)


def _errors(preds, truths) -> list[float]:
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(truths, dtype=np.float64).ravel()
    if p.size != t.size:
        raise DataError(f"length mismatch: {p.size} predictions vs {t.size} truths")
    if p.size == 0:
        raise DataError("no samples to evaluate")
    return (p - t).tolist()


def _report(errors: Sequence[float], target: str, fold) -> MetricReport:
    n = len(errors)
    mae = math.fsum(abs(e) for e in errors) / n
    rmse = math.sqrt(math.fsum(e * e for e in errors) / n)
    mean = math.fsum(errors) / n
    sd = math.sqrt(math.fsum((e - mean) ** 2 for e in errors) / n)
    return MetricReport(sd=sd, rmse=rmse, mae=mae, n=n, target=target, fold=str(fold), errors=tuple(errors))


def compute_metrics(preds, truths, target: str = "", fold="aggregate") -> MetricReport:
    return _report(_errors(preds, truths), target, fold)


def aggregate_folds(reports: Sequence[MetricReport], k: int = 5) -> MetricReport:
    """Pool per-sample errors of all folds and recompute (not an average of fold metrics)."""
    if len(reports) != k:
        raise DataError(f"expected {k} fold reports, got {len(reports)}")
    errors: list[float] = []
    for r in reports:
        if len(r.errors) != r.n:
            raise DataError(f"fold {r.fold} report carries no per-sample errors")
        errors.extend(r.errors)
    targets = {r.target for r in reports}
    return _report(errors, targets.pop() if len(targets) == 1 else "", "aggregate")


@dataclass(frozen=True)
class BlandAltman:
    sample_ids: tuple[str, ...]
    means: tuple[float, ...]
    diffs: tuple[float, ...]
    bias: float
    sd: float
    loa_low: float
    loa_high: float


def _ba_summary(diffs: Sequence[float]) -> tuple[float, float, float, float]:
    n = len(diffs)
    bias = math.fsum(diffs) / n
    sd = math.sqrt(math.fsum((d - bias) ** 2 for d in diffs) / n)
    return bias, sd, bias - LOA_Z * sd, bias + LOA_Z * sd


def bland_altman(preds, truths, sample_ids: Sequence[str] | None = None) -> BlandAltman:
    diffs = _errors(preds, truths)
    if len(diffs) < 2:
        raise DataError("Bland-Altman limits need at least 2 samples")
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(truths, dtype=np.float64).ravel()
    means = ((p + t) / 2.0).tolist()
    if sample_ids is None:
        sample_ids = [str(i) for i in range(len(diffs))]
    elif len(sample_ids) != len(diffs):
        raise DataError("sample_ids length does not match predictions")
    bias, sd, lo, hi = _ba_summary(diffs)
    return BlandAltman(tuple(sample_ids), tuple(means), tuple(diffs), bias, sd, lo, hi)


def summary_from_records(diffs: Sequence[float]) -> tuple[float, float, float, float]:
    """(bias, sd, lower, upper) recomputed from per-sample differences."""
    return _ba_summary(list(diffs))


# --- CSV export ---------------------------------------------------------

METRIC_COLUMNS = ("target", "fold", "n", "sd", "rmse", "mae")


def _comment_block(header: str | None) -> str:
    lines = ["# sd: population standard deviation of (pred - truth); rmse/mae over the same errors"]
    if header:
        lines += [f"# {h}" for h in header.splitlines()]
    return "\n".join(lines) + "\n"


def metrics_csv(reports: Sequence[MetricReport], header: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(_comment_block(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in reports:
        w.writerow([r.target, r.fold, r.n, repr(r.sd), repr(r.rmse), repr(r.mae)])
    return buf.getvalue()


def write_metrics(reports: Sequence[MetricReport], path, header: str | None = None) -> None:
    Path(path).write_text(metrics_csv(reports, header), encoding="utf-8")


def read_metrics(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for r in rows:
        r["n"] = int(r["n"])
        for k in ("sd", "rmse", "mae"):
            r[k] = float(r[k])
    return rows


def bland_altman_csv(ba: BlandAltman, header: str | None = None) -> str:
    buf = io.StringIO()
    buf.write(_comment_block(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sample_id", "mean", "diff"))
    for sid, m, d in zip(ba.sample_ids, ba.means, ba.diffs):
        w.writerow([sid, repr(m), repr(d)])
    buf.write(f"# bias={ba.bias!r}\n# sd={ba.sd!r}\n# loa_low={ba.loa_low!r}\n# loa_high={ba.loa_high!r}\n")
    return buf.getvalue()


def write_bland_altman(ba: BlandAltman, path, header: str | None = None) -> None:
    Path(path).write_text(bland_altman_csv(ba, header), encoding="utf-8")


def read_bland_altman(path) -> tuple[list[dict], dict[str, float]]:
    """Per-sample rows and the footer summary of a Bland-Altman CSV."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    rows = list(csv.DictReader([ln for ln in text if not ln.startswith("#")]))
    for r in rows:
        r["mean"] = float(r["mean"])
        r["diff"] = float(r["diff"])
    summary = {}
    for ln in text:
        body = ln[1:].strip()
        if ln.startswith("#") and "=" in body and body.split("=", 1)[0] in ("bias", "sd", "loa_low", "loa_high"):
            key, val = body.split("=", 1)
            summary[key] = float(val)
    return rows, summary
