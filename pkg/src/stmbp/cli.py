"""Blood pressure from facial spatio-temporal maps: ``stmbp synth|prepare|train|evaluate|predict``.

Exit codes: 0 success, 1 data error, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import torch

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, RunConfig, apply_overrides, load_config, preset
from .dataset_io import Manifest, ManifestEntry, load_manifest, write_manifest
from .errors import ConfigError, DataError, StmbpError
from .evaluation import bland_altman, compute_metrics, write_bland_altman, write_metrics
from .stm import write_stm
from .synthetic import generate, write_dataset
from .training import clips_of, cross_validate, load_dataset, predict, stm_from_entry

log = logging.getLogger("stmbp")


def _setup_torch():
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def _run_config(args) -> RunConfig:
    cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    items = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        items.append(f"run.seed={args.seed}")
    if getattr(args, "target", None):
        items.append(f"run.target={args.target}")
    if getattr(args, "folds", None) is not None:
        items.append(f"train.folds={args.folds}")
    return apply_overrides(cfg, items)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- synth -----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args.out)
    cfg.write(out / "config.txt")
    manifest = write_dataset(generate(cfg.synth), out, header=cfg.to_text())
    log.info("wrote %d synthetic samples to %s", len(manifest), out)
    return 0


# --- prepare ---------------------------------------------------------------


def _prepare_one(entry: ManifestEntry, out: Path, fps: float):
    try:
        stm = stm_from_entry(entry, fps)
    except (StmbpError, OSError) as exc:
        return entry.sample_id, None, str(exc)
    path = out / "stm" / f"{entry.sample_id}.stm"
    write_stm(stm, path)
    return entry.sample_id, path, None


def cmd_prepare(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args.out)
    (out / "stm").mkdir(exist_ok=True)
    manifest = load_manifest(args.manifest, check_paths=False)
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_prepare_one, manifest, [out] * len(manifest), [args.fps] * len(manifest)))
    else:
        results = [_prepare_one(e, out, args.fps) for e in manifest]
    entries, failed = [], 0
    by_id = manifest.by_id()
    for sid, path, err in results:
        if err is not None:
            failed += 1
            print(f"FAILED {sid}: {err}", file=sys.stderr)
            continue
        e = by_id[sid]
        entries.append(ManifestEntry(sid, path, None, e.sbp, e.dbp))
    write_manifest(Manifest(entries), out / "index.tsv", header=cfg.to_text())
    log.info("prepared %d/%d samples", len(entries), len(manifest))
    return 1 if failed else 0


# --- train -----------------------------------------------------------------


def _curve_csv(rows, header: str) -> str:
    buf = io.StringIO()
    buf.write("".join(f"# {h}\n" for h in header.splitlines()))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("target", "fold", "step", "loss", "ce", "mae"))
    w.writerows(rows)
    return buf.getvalue()


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args.out)
    header = cfg.to_text()
    cfg.write(out / "config.txt")
    ds = load_dataset(load_manifest(args.manifest))
    if not ds.records:
        raise DataError("dataset is empty")
    reports, curve_rows = [], []

    def on_log(fold, step, loss, ce, mae):
        log.info("fold %d step %d loss %.4f (ce %.4f, mae %.4f)", fold, step, loss, ce, mae)

    for target in cfg.targets:
        cv = cross_validate(cfg, ds, target, on_log=on_log if args.verbose else None)
        cv.plan.write(out / f"folds_{target}.tsv")
        for f in cv.folds:
            save_checkpoint(f.model, cfg, out / f"{target}_fold{f.fold}.ckpt")
            reports.append(f.report)
            curve_rows += [(target, f.fold, s, repr(l), repr(ce), repr(m)) for s, l, ce, m in f.curve]
        reports.append(cv.pooled)
        ids, preds = cv.pooled_predictions()
        truths = [ds.record(s).value(target) for s in ids]
        write_bland_altman(bland_altman(preds, truths, ids), out / f"bland_altman_{target}.csv", header)
        print(f"{target}: pooled n={cv.pooled.n} MAE={cv.pooled.mae:.3f} RMSE={cv.pooled.rmse:.3f} SD={cv.pooled.sd:.3f}")
    write_metrics(reports, out / "metrics.csv", header)
    (out / "loss_curve.csv").write_text(_curve_csv(curve_rows, header), encoding="utf-8")
    return 0


# --- evaluate / predict ------------------------------------------------------


def _load_models(paths):
    models = {}
    for p in paths:
        ck = load_checkpoint(p)
        if ck.target in models:
            raise ConfigError(f"two checkpoints for target {ck.target}")
        models[ck.target] = ck
    return models


def cmd_evaluate(args) -> int:
    models = _load_models(args.checkpoint)
    out = _out_dir(args.out)
    ds = load_dataset(load_manifest(args.manifest))
    if not ds.records:
        raise DataError("dataset is empty")
    reports = []
    header = None
    for target, ck in sorted(models.items()):
        header = header or ck.config.to_text()
        ids = ds.ids
        outputs = predict(ck.model, ds, ids, ck.config)
        preds = [o.fused for o in outputs]
        truths = [ds.record(s).value(target) for s in ids]
        reports.append(compute_metrics(preds, truths, target=target, fold="eval"))
        if len(ids) >= 2:
            write_bland_altman(bland_altman(preds, truths, ids), out / f"bland_altman_{target}.csv", ck.config.to_text())
        r = reports[-1]
        print(f"{target}: n={r.n} MAE={r.mae:.3f} RMSE={r.rmse:.3f} SD={r.sd:.3f}")
    write_metrics(reports, out / "metrics.csv", header)
    return 0


PREDICT_COLUMNS = ("sample_id", "target", "fused", "reg", "group", "probs")


def format_prediction(sid: str, target: str, o) -> str:
    probs = ",".join(f"{p:.6f}" for p in o.class_probs)
    return f"{sid}\t{target}\t{o.fused:.4f}\t{o.reg_value:.4f}\tG{o.group}\t{probs}"


def cmd_predict(args) -> int:
    models = _load_models(args.checkpoint)
    if args.manifest:
        manifest = load_manifest(args.manifest)
    elif args.sample:
        sample = Path(args.sample)
        lm = Path(args.landmarks) if args.landmarks else None
        if lm is None and sample.suffix != ".stm":
            raise ConfigError("--landmarks is required unless --sample is an .stm file")
        manifest = Manifest([ManifestEntry(sample.stem, sample, lm, 120.0, 80.0)])
    else:
        raise ConfigError("give --sample or --manifest")
    lines = ["\t".join(PREDICT_COLUMNS)]
    for entry in manifest:
        stm = stm_from_entry(entry, args.fps)
        for target, ck in sorted(models.items()):
            x = torch.tensor(clips_of(stm, ck.config.model, entry.sample_id)[None], dtype=torch.float32)
            lines.append(format_prediction(entry.sample_id, target, ck.model.predict(x)[0]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# --- parser ------------------------------------------------------------------


def _add_config_args(p, train_opts: bool = False):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", default="default", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--seed", type=int)
    if train_opts:
        p.add_argument("--target", choices=["SBP", "DBP", "both"])
        p.add_argument("--folds", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stmbp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    # also accepted after the subcommand; SUPPRESS keeps a top-level -v from being reset
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic STM dataset")
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", parents=[common], help="frames + landmarks -> STM files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--workers", type=int, default=1)
    _add_config_args(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="k-fold cross-validated training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p, train_opts=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="metrics of checkpoints on a manifest")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="fused SBP/DBP for samples")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--sample", help=".stm file, or frames path together with --landmarks")
    p.add_argument("--landmarks")
    p.add_argument("--manifest")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _setup_torch()
    try:
        return args.func(args)
    except StmbpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
