"""Cough- and subject-level scoring: accuracy, confusion matrices, ROC/AROC.

Labels are class indices into a task's class list. In two-class tasks
index 1 is the pathological (positive) class.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pipeline
from .errors import DegenerateRocError, LabelError, MetricError
from .net.model import predict_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionRecord:
    source_id: str
    subject_id: str
    true_label: int
    predicted_label: int
    class_scores: tuple


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows = true, cols = predicted
    row_percentages: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "counts": self.counts.tolist(),
            "row_percentages": self.row_percentages.tolist(),
        }


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    aroc: float
    optimal_threshold: float
    optimal_index: int

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    def to_dict(self) -> dict:
        return {
            "aroc": self.aroc,
            "optimal_threshold": _json_float(self.optimal_threshold),
            "optimal_point": [self.fpr[self.optimal_index], self.tpr[self.optimal_index]],
            "points": [[f, t, _json_float(th)] for f, t, th in self.points],
        }


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def accuracy(records) -> float:
    """Correct predictions over total predictions."""
    records = list(records)
    if not records:
        raise MetricError("accuracy is undefined for an empty prediction set")
    correct = sum(r.true_label == r.predicted_label for r in records)
    return correct / len(records)


def confusion(records, classes) -> ConfusionMatrix:
    k = len(classes)
    counts = np.zeros((k, k), dtype=np.int64)
    for r in records:
        if not (0 <= r.true_label < k and 0 <= r.predicted_label < k):
            raise LabelError(f"{r.source_id}: label outside class list {list(classes)}")
        counts[r.true_label, r.predicted_label] += 1
    rows = counts.sum(axis=1, keepdims=True)
    pct = np.divide(100.0 * counts, rows, out=np.zeros((k, k)), where=rows > 0)
    return ConfusionMatrix(tuple(classes), counts, pct)


def roc_from_scores(scores, positives) -> RocCurve:
    """Empirical ROC swept over every distinct score, plus +inf/-inf sentinels.

    A sample is called positive when ``score >= threshold``. Tied scores
    move together, so the trapezoidal area equals the Mann-Whitney
    statistic with ties counted as one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateRocError("ROC needs both positive and negative examples")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # last index of every run of equal scores
    run_end = np.flatnonzero(np.append(s_sorted[1:] != s_sorted[:-1], True))
    tp = np.cumsum(y_sorted)[run_end]
    fp = np.cumsum(~y_sorted)[run_end]
    tpr = np.concatenate([[0.0], tp / n_pos, [1.0]])
    fpr = np.concatenate([[0.0], fp / n_neg, [1.0]])
    thresholds = np.concatenate([[np.inf], s_sorted[run_end], [-np.inf]])
    aroc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    dist = np.hypot(fpr, 1.0 - tpr)
    best = int(np.argmin(dist))
    return RocCurve(fpr, tpr, thresholds, aroc, float(thresholds[best]), best)


def roc(records, positive: int = 1) -> RocCurve:
    records = list(records)
    scores = [r.class_scores[positive] for r in records]
    return roc_from_scores(scores, [r.true_label == positive for r in records])


# --------------------------------------------------------------------------
# subject aggregation
# --------------------------------------------------------------------------

def mode_vote(counts: np.ndarray, mean_scores: np.ndarray, prefer: int | None = None) -> np.ndarray:
    """Most frequent label per row of a (S, K) vote-count matrix.

    Ties go to ``prefer`` when it is among the tied labels; otherwise to the
    tied label with the highest mean score, then to the lowest index.
    """
    counts = np.asarray(counts)
    tied = counts == counts.max(axis=1, keepdims=True)
    masked = np.where(tied, mean_scores, -np.inf)
    choice = np.argmax(masked, axis=1)
    if prefer is not None:
        choice = np.where(tied[:, prefer], prefer, choice)
    return choice


def aggregate_subject(records, n_classes: int | None = None) -> list[PredictionRecord]:
    """Collapse cough records into one record per subject (first-seen order).

    The subject prediction is the mode of its cough predictions; in
    two-class tasks a tie goes to the pathological class (index 1). Subject
    scores are the mean cough scores and only feed subject-level ROC.
    """
    records = list(records)
    if not records:
        return []
    k = n_classes or len(records[0].class_scores)
    subjects: dict[str, int] = {}
    for r in records:
        subjects.setdefault(r.subject_id, len(subjects))
    s_idx = np.array([subjects[r.subject_id] for r in records])
    n_subj = len(subjects)
    pred = np.array([r.predicted_label for r in records])
    true = np.array([r.true_label for r in records])
    scores = np.array([r.class_scores for r in records], dtype=np.float64)

    votes = np.zeros((n_subj, k), dtype=np.int64)
    np.add.at(votes, (s_idx, pred), 1)
    truth = np.zeros((n_subj, k), dtype=np.int64)
    known = true >= 0  # unlabelled coughs (prediction only) carry -1
    np.add.at(truth, (s_idx[known], true[known]), 1)
    sums = np.zeros((n_subj, k))
    np.add.at(sums, s_idx, scores)
    mean_scores = sums / np.bincount(s_idx, minlength=n_subj)[:, None]

    prefer = 1 if k == 2 else None
    subj_pred = mode_vote(votes, mean_scores, prefer)
    subj_true = np.where(truth.any(axis=1), np.argmax(truth, axis=1), -1)
    return [
        PredictionRecord(sid, sid, int(subj_true[i]), int(subj_pred[i]), tuple(mean_scores[i].tolist()))
        for sid, i in subjects.items()
    ]


def collapsed_rates(records, healthy: int = 0) -> dict:
    """Healthy-vs-any-pathology rates for multi-class predictions (percent)."""
    healthy_recs = [r for r in records if r.true_label == healthy]
    path_recs = [r for r in records if r.true_label != healthy]
    hh = sum(r.predicted_label == healthy for r in healthy_recs)
    pp = sum(r.predicted_label != healthy for r in path_recs)
    return {
        "healthy_classified_healthy": 100.0 * hh / len(healthy_recs) if healthy_recs else None,
        "pathology_classified_pathology": 100.0 * pp / len(path_recs) if path_recs else None,
    }


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    task: str
    classes: tuple
    side: str
    cough_records: list
    subject_records: list
    cough_accuracy: float
    subject_accuracy: float
    cough_confusion: ConfusionMatrix
    subject_confusion: ConfusionMatrix
    roc_cough: RocCurve | None = None
    roc_subject: RocCurve | None = None
    collapsed: dict | None = None
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "classes": list(self.classes),
            "side": self.side,
            "n_coughs": len(self.cough_records),
            "n_subjects": len(self.subject_records),
            "cough_accuracy": self.cough_accuracy,
            "subject_accuracy": self.subject_accuracy,
        }
        if len(self.classes) == 2:
            d["aroc_cough"] = self.roc_cough.aroc if self.roc_cough else None
            d["aroc_subject"] = self.roc_subject.aroc if self.roc_subject else None
            d["optimal_threshold_cough"] = _json_float(self.roc_cough.optimal_threshold) if self.roc_cough else None
            d["optimal_threshold_subject"] = (_json_float(self.roc_subject.optimal_threshold)
                                              if self.roc_subject else None)
        d["cough_confusion"] = self.cough_confusion.to_dict()
        d["subject_confusion"] = self.subject_confusion.to_dict()
        if self.collapsed is not None:
            d["collapsed"] = self.collapsed
        if len(self.classes) == 2:
            d["roc_cough"] = self.roc_cough.to_dict() if self.roc_cough else None
            d["roc_subject"] = self.roc_subject.to_dict() if self.roc_subject else None
        d["failure_count"] = len(self.failures)
        d["failures"] = [{"source_id": s, "error": e} for s, e in self.failures]
        return d

    def write(self, out_dir, prefix: str = "eval") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{prefix}_report.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        for level, cm in (("cough", self.cough_confusion), ("subject", self.subject_confusion)):
            write_confusion_csv(cm, out / f"{prefix}_confusion_{level}.csv")
        for level, curve in (("cough", self.roc_cough), ("subject", self.roc_subject)):
            if curve is not None:
                write_roc_csv(curve, out / f"{prefix}_roc_{level}.csv")


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true", "predicted", "count", "row_percent"])
        for i, a in enumerate(cm.classes):
            for j, b in enumerate(cm.classes):
                w.writerow([a, b, int(cm.counts[i, j]), repr(float(cm.row_percentages[i, j]))])


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["false_positive_rate", "true_positive_rate", "threshold"])
        for f, t, th in curve.points:
            w.writerow([repr(f), repr(t), repr(th)])


def build_report(task: str, classes, records, side: str = "test", failures=()) -> EvalReport:
    """Assemble cough- and subject-level metrics from cough predictions."""
    classes = tuple(classes)
    records = list(records)
    subjects = aggregate_subject(records, len(classes))
    cough_cm = confusion(records, classes)
    subj_cm = confusion(subjects, classes)
    roc_c = roc_s = None
    collapsed = None
    if len(classes) == 2:
        try:
            roc_c = roc(records, 1)
            roc_s = roc(subjects, 1)
        except DegenerateRocError as exc:
            log.warning("ROC skipped: %s", exc)
    else:
        collapsed = {"cough": collapsed_rates(records), "subject": collapsed_rates(subjects)}
    return EvalReport(
        task, classes, side, records, subjects,
        accuracy(records), accuracy(subjects), cough_cm, subj_cm,
        roc_c, roc_s, collapsed, list(failures),
    )


def evaluate(checkpoint, entries, task=None, side: str = "test", jobs: int = 1) -> EvalReport:
    """Run conditioning, features and the classifier over manifest entries.

    Files that fail to load or featurise are excluded and listed in the
    report's failures.
    """
    task = pipeline.get_task(task or checkpoint.meta.get("task"))
    pipeline.check_task_matches(checkpoint, task)
    labelled = task.relabel(entries)
    cfgs = pipeline.PipelineConfigs.from_meta(checkpoint.meta)
    results = pipeline.featurize_entries([e for e, _ in labelled], cfgs, jobs=jobs)
    kept, failures = [], []
    for (entry, label), (seq, err) in zip(labelled, results):
        if err is not None:
            failures.append((entry.source_id, err))
        else:
            kept.append((entry, label, seq))
    if failures:
        log.warning("%d of %d files failed and were excluded", len(failures), len(labelled))
    if not kept:
        raise MetricError("no evaluable coughs")
    scores = predict_batch(checkpoint.params, checkpoint.config, [s.frames for _, _, s in kept])
    records = [
        PredictionRecord(e.source_id, e.subject_id, lab, int(np.argmax(sc)), tuple(sc.tolist()))
        for (e, lab, _), sc in zip(kept, scores)
    ]
    return build_report(task.name, task.classes, records, side, failures)
