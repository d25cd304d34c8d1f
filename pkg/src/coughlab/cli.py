"""``coughlab`` command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Set ``COUGHLAB_LOG`` (e.g. ``INFO``, ``DEBUG``) to change the log level.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pca as pca_mod
from .audio import detrend, load_wav, normalize
from .config import RunConfig, parse_assignment
from .dataset import LABELS, load_manifest, load_split, save_split, split, synth_corpus, ManifestEntry
from .errors import CoughLabError, ConfigError, DataError
from .eval import PredictionRecord, aggregate_subject, evaluate
from .features import export_features_csv, save_features, spectral_bins
from .net import grid_search, load_checkpoint, save_checkpoint, train
from .net.model import predict_batch
from .net.train import GridSearchSpec, write_grid_csv
from .pipeline import PipelineConfigs, check_task_matches, featurize_entries, get_task

log = logging.getLogger("coughlab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _run_config(args) -> RunConfig:
    overrides = dict(parse_assignment(s) for s in (getattr(args, "set", None) or []))
    for flag, key in (("seed", "seed"), ("jobs", "jobs"), ("task", "task"), ("epochs", "train.max_epochs")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = val
    return RunConfig.resolve(getattr(args, "config", None), overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _feature_name(source_id: str) -> str:
    stem = os.path.splitext(source_id)[0]
    return stem.replace("\\", "/").strip("/").replace("/", "__") + ".clf"


def _featurize_labelled(labelled, cfgs, jobs, strict):
    """Features for (entry, label) pairs; failures dropped (or fatal if strict)."""
    results = featurize_entries([e for e, _ in labelled], cfgs, jobs)
    out, failed = [], []
    for (entry, label), (seq, err) in zip(labelled, results):
        if err:
            failed.append(f"{entry.clip_path}: {err}")
        else:
            out.append((entry, label, seq))
    if failed and strict:
        raise DataError("feature extraction failed for:\n  " + "\n  ".join(failed))
    return out, failed


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    counts = {lab: getattr(args, lab) for lab in LABELS if getattr(args, lab)}
    if not counts:
        raise ConfigError("give at least one nonzero class count (--healthy/--asthma/--urti/--lrti)")
    lo, _, hi = args.coughs.partition("-")
    rng = (int(lo), int(hi or lo))
    entries = synth_corpus(args.out, counts, rng, seed=args.seed or 0, stage=args.stage)
    n_subj = len({e.subject_id for e in entries})
    print(f"wrote {len(entries)} coughs from {n_subj} subjects to {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_featurize(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args)
    entries = load_manifest(args.manifest)
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)
    done, failed = _featurize_labelled([(e, None) for e in entries], cfg.pipeline(), cfg["jobs"], args.strict)
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_id", "subject_id", "label", "stage", "feature_file", "n_frames", "dim"])
        for entry, _, seq in done:
            name = _feature_name(entry.source_id)
            save_features(feat_dir / name, seq)
            if args.csv:
                export_features_csv(feat_dir / (name[:-4] + ".csv"), seq)
            w.writerow([entry.source_id, entry.subject_id, entry.label, entry.stage,
                        f"features/{name}", seq.n_frames, seq.dim])
    cfg.write(out / "config.resolved.txt")
    print(f"featurized {len(done)} of {len(entries)} clips into {out}")
    return 2 if failed and args.strict else 0


def _split_for_training(labelled_entries, cfg: RunConfig):
    entries = [e for e, _ in labelled_entries]
    seed = cfg["seed"]
    plan = split(entries, cfg["split.train_fraction"], seed, cfg["split.stratify"])
    train_entries = plan.side(entries, "train")
    val_subjects = frozenset()
    if cfg["split.val_fraction"] > 0:
        vplan = split(train_entries, 1.0 - cfg["split.val_fraction"], seed + 1, cfg["split.stratify"])
        val_subjects = vplan.test_subjects
    return plan, val_subjects


def _prepare_training(args, cfg: RunConfig):
    task = get_task(cfg["task"])
    entries = load_manifest(args.manifest)
    task.check(entries)
    labelled = task.relabel(entries)
    plan, val_subjects = _split_for_training(labelled, cfg)
    fit = [(e, y) for e, y in labelled if e.subject_id in plan.train_subjects and e.subject_id not in val_subjects]
    val = [(e, y) for e, y in labelled if e.subject_id in val_subjects]
    cfgs = cfg.pipeline()
    fit_f, _ = _featurize_labelled(fit, cfgs, cfg["jobs"], args.strict)
    val_f, _ = _featurize_labelled(val, cfgs, cfg["jobs"], args.strict)
    if not fit_f:
        raise DataError("no training clips could be featurized")
    return task, plan, val_subjects, [(s.frames, y) for _, y, s in fit_f], [(s.frames, y) for _, y, s in val_f]


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args)
    task, plan, val_subjects, train_set, val_set = _prepare_training(args, cfg)
    net_cfg = cfg.network(len(task.classes))
    params, history = train(train_set, val_set, net_cfg, cfg.training())
    meta = {"task": task.name, "classes": list(task.classes), **cfg.pipeline().to_meta()}
    save_checkpoint(params, net_cfg, out / "checkpoint.clck", meta=meta)
    history.write_csv(out / "history.csv")
    save_split(plan, out / "split.json", manifest=str(Path(args.manifest).resolve()), task=task.name,
               val_subjects=sorted(val_subjects))
    best = history.best()
    summary = {
        "task": task.name,
        "n_train_coughs": len(train_set),
        "n_val_coughs": len(val_set),
        "epochs_run": len(history.records),
        "best_epoch": history.best_epoch,
        "train_loss": best.train_loss,
        "train_accuracy": best.train_acc,
        "val_loss": best.val_loss if val_set else None,
        "val_accuracy": best.val_acc if val_set else None,
    }
    _write_json(out / "train_summary.json", summary)
    cfg.write(out / "config.resolved.txt")
    print(f"trained {task.name}: best epoch {history.best_epoch}, train accuracy {best.train_acc:.4f}")
    return 0


def cmd_grid_search(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args)
    task, _, _, train_set, val_set = _prepare_training(args, cfg)
    spec = GridSearchSpec(
        tuple(int(v) for v in args.hidden.split(",")),
        tuple(int(v) for v in args.layers.split(",")),
        tuple(float(v) for v in args.dropout.split(",")),
        args.select,
    )
    best, rows = grid_search(spec, train_set, val_set, cfg.network(len(task.classes)), cfg.training())
    write_grid_csv(rows, out / "grid.csv")
    _write_json(out / "grid_best.json", best.to_dict())
    cfg.write(out / "config.resolved.txt")
    print(f"best: hidden_units={best.hidden_units} layers={best.num_bilstm_layers} dropout={best.dropout_rate}")
    return 0


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args)
    ckpt = load_checkpoint(args.checkpoint)
    task = get_task(args.task or ckpt.meta.get("task") or cfg["task"])
    check_task_matches(ckpt, task)
    if args.split:
        plan, record = load_split(args.split)
        manifest = args.manifest or record.get("manifest")
        if not manifest:
            raise ConfigError("split record names no manifest; pass --manifest")
        entries = plan.side(load_manifest(manifest), args.side)
        side = "train-set" if args.side == "train" else "test"
    elif args.manifest:
        if args.side == "train":
            raise ConfigError("--side needs --split")
        entries, side = load_manifest(args.manifest), "manifest"
    else:
        raise ConfigError("eval needs --split or --manifest")
    report = evaluate(ckpt, entries, task, side=side, jobs=cfg["jobs"])
    report.write(out)
    cfg.write(out / "config.resolved.txt")
    d = report.to_dict()
    line = f"{task.name} [{side}] cough accuracy {d['cough_accuracy']:.4f}, subject accuracy {d['subject_accuracy']:.4f}"
    if d.get("aroc_cough") is not None:
        line += f", AROC cough {d['aroc_cough']:.4f} / subject {d['aroc_subject']:.4f}"
    print(line)
    return 0


def cmd_predict(args) -> int:
    cfg = _run_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    classes = ckpt.meta.get("classes") or [str(i) for i in range(ckpt.config.num_classes)]
    if args.manifest:
        entries = load_manifest(args.manifest)
    elif args.wavs:
        entries = [ManifestEntry(str(Path(p)), args.subject or "", "healthy", "none", (), Path("."))
                   for p in args.wavs]
    else:
        raise ConfigError("predict needs --manifest or WAV paths")
    labelled = [(e, None) for e in entries]
    done, _ = _featurize_labelled(labelled, PipelineConfigs.from_meta(ckpt.meta), cfg["jobs"], args.strict)
    scores = predict_batch(ckpt.params, ckpt.config, [s.frames for _, _, s in done])
    records = [PredictionRecord(e.source_id, e.subject_id, -1, int(np.argmax(sc)), tuple(sc.tolist()))
               for (e, _, _), sc in zip(done, scores)]
    rows = [("cough", r) for r in records]
    if args.subject_grouping:
        rows += [("subject", r) for r in aggregate_subject(records, len(classes))]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "source_id", "subject_id", "predicted_label"] + [f"score_{c}" for c in classes])
        for level, r in rows:
            w.writerow([level, r.source_id, r.subject_id, classes[r.predicted_label]]
                       + [repr(float(v)) for v in r.class_scores])
    print(f"wrote {len(rows)} prediction rows to {out}")
    return 0


def _analysis_entries(args):
    entries = load_manifest(args.manifest)
    if args.split:
        plan, _ = load_split(args.split)
        entries = plan.side(entries, args.side)
    return entries


def _pca_frames(entries, cfg, rng, per_class, label_of):
    done, _ = _featurize_labelled([(e, None) for e in entries], cfg.pipeline(), cfg["jobs"], False)
    grouped: dict[str, list] = {}
    for entry, _, seq in done:
        grouped.setdefault(label_of(entry), []).append(seq.frames)
    out = []
    for label in sorted(grouped, key=lambda s: (LABELS.index(s) if s in LABELS else len(LABELS), s)):
        frames = np.vstack(grouped[label])
        if frames.shape[0] > per_class:
            keep = np.sort(rng.choice(frames.shape[0], per_class, replace=False))
            frames = frames[keep]
        out.append((label, frames))
    return out


def cmd_analyze(args) -> int:
    cfg = _run_config(args)
    out = _out_dir(args)
    entries = _analysis_entries(args)
    if not entries:
        raise ConfigError("no manifest entries to analyze")
    if args.mode == "pca":
        rng = np.random.default_rng(cfg["seed"])
        per_class = cfg["analyze.frames_per_class"]
        groups = _pca_frames(entries, cfg, rng, per_class, lambda e: e.label)
        if args.compare:
            extra = load_manifest(args.compare)
            groups += _pca_frames(extra, cfg, rng, per_class, lambda e: args.compare_label)
        if not groups:
            raise ConfigError("no frames to analyze")
        frames = np.vstack([f for _, f in groups])
        labels = [lab for lab, f in groups for _ in range(f.shape[0])]
        model = pca_mod.fit(frames, 3)
        pca_mod.export_scatter(pca_mod.transform(model, frames), labels, out / "pca_scatter.csv")
        pca_mod.export_variance(model, out / "pca_variance.csv")
        print(f"PCA on {frames.shape[0]} frames: cumulative explained ratio "
              f"{float(np.sum(model.explained_ratio)):.4f}")
    else:
        n_bins = cfg["analyze.n_bins"]
        frame_cfg = cfg.pipeline().frame
        per_label: dict[str, list] = {}
        with open(out / "spectral_bins.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source_id", "subject_id", "label"] + [f"bin{j + 1}" for j in range(n_bins)])
            for e in entries:
                try:
                    clip = normalize(detrend(load_wav(e.path)))
                except (CoughLabError, OSError) as exc:
                    log.warning("%s: %s", e.path, exc)
                    if args.strict:
                        raise
                    continue
                bins = spectral_bins(clip, n_bins, frame_cfg)
                per_label.setdefault(e.label, []).append(bins.bin_power)
                w.writerow([e.source_id, e.subject_id, e.label] + [repr(float(v)) for v in bins.bin_power])
        with open(out / "spectral_summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "bin", "min", "q1", "median", "q3", "max", "n"])
            for label in [lab for lab in LABELS if lab in per_label]:
                powers = np.array(per_label[label])
                for j in range(n_bins):
                    col = powers[:, j]
                    q = np.percentile(col, [0, 25, 50, 75, 100])
                    w.writerow([label, j + 1] + [repr(float(v)) for v in q] + [col.size])
        print(f"spectral bins for {sum(len(v) for v in per_label.values())} clips written to {out}")
    cfg.write(out / "config.resolved.txt")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--strict", action="store_true", help="fail on any unreadable clip")

    p = _Parser(prog="coughlab", description="Cough sound screening: features, BiLSTM training, evaluation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic cough corpus")
    s.add_argument("--out", required=True)
    for lab in LABELS:
        s.add_argument(f"--{lab}", type=int, default=0, metavar="N", help=f"{lab} subjects")
    s.add_argument("--coughs", default="10-12", help="coughs per subject, LO-HI")
    s.add_argument("--stage", default="none", choices=["stage1", "stage2", "none"])
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("featurize", parents=[common], help="write per-cough feature files")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", action="store_true", help="also write a CSV per cough")
    s.set_defaults(func=cmd_featurize)

    for name, func, hlp in (("train", cmd_train, "train a classifier"),
                            ("grid-search", cmd_grid_search, "grid-search architecture hyperparameters")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--manifest", required=True)
        s.add_argument("--task")
        s.add_argument("--out", required=True)
        s.add_argument("--epochs", type=int)
        if name == "grid-search":
            s.add_argument("--hidden", default="50")
            s.add_argument("--layers", default="2")
            s.add_argument("--dropout", default="0.3")
            s.add_argument("--select", default="training-loss", choices=["training-loss", "validation-accuracy"])
        s.set_defaults(func=func)

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", help="split.json written by train")
    s.add_argument("--manifest")
    s.add_argument("--side", default="test", choices=["test", "train"])
    s.add_argument("--task")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", parents=[common], help="score WAV files")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest")
    s.add_argument("wavs", nargs="*")
    s.add_argument("--subject", help="subject id for bare WAV paths")
    s.add_argument("--subject-grouping", action="store_true")
    s.add_argument("--out", required=True, help="predictions CSV")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("analyze", parents=[common], help="PCA scatter or spectral-bin exports")
    s.add_argument("--manifest", required=True)
    s.add_argument("--mode", required=True, choices=["pca", "spectral-bins"])
    s.add_argument("--split")
    s.add_argument("--side", default="train", choices=["test", "train"])
    s.add_argument("--compare", help="second manifest projected into the same PCA space")
    s.add_argument("--compare-label", default="recovered")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    level = os.environ.get("COUGHLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CoughLabError as exc:
        print(f"coughlab {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"coughlab {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
