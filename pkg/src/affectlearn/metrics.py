"""Evaluation measures: CCC, binary F1, confusion statistics, composites.

All statistics use population (1/N) moments so that a metric computed on
one batch agrees exactly with the corresponding loss term.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


def _check_pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.shape[0]} vs {pred.shape[0]}")
    if truth.size == 0:
        raise ValueError("empty series")
    if not (np.isfinite(truth).all() and np.isfinite(pred).all()):
        raise ValueError("series contain non-finite values")
    return truth, pred


def ccc(truth, pred) -> float:
    """Concordance correlation coefficient of two equal-length series.

    2*cov / (var_truth + var_pred + (mean gap)^2), population moments.
    When both series are constant the ratio is defined as 1.0 for equal
    constants and 0.0 otherwise.
    """
    truth, pred = _check_pair(truth, pred)
    mt, mp = truth.mean(), pred.mean()
    vt = np.mean((truth - mt) ** 2)
    vp = np.mean((pred - mp) ** 2)
    cov = np.mean((truth - mt) * (pred - mp))
    denom = vt + vp + (mt - mp) ** 2
    if denom == 0.0:
        return 1.0  # both constant with equal value
    return float(2.0 * cov / denom)


def f1_binary(truth, pred) -> float:
    """F1 score of binary vectors; 1.0 when no positives exist anywhere."""
    truth, pred = _check_pair(truth, pred)
    tp = float(np.sum((truth == 1) & (pred == 1)))
    fp = float(np.sum((truth == 0) & (pred == 1)))
    fn = float(np.sum((truth == 1) & (pred == 0)))
    if tp == fp == fn == 0.0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def binary_accuracy(truth, pred) -> float:
    """Fraction of matching entries in two binary vectors."""
    truth, pred = _check_pair(truth, pred)
    return float(np.mean(truth == pred))


def confusion_matrix(truth_labels, pred_labels, n_classes: int) -> np.ndarray:
    """(n_classes, n_classes) count matrix; rows are truth, columns predictions."""
    truth_labels = np.asarray(truth_labels, dtype=np.int64).ravel()
    pred_labels = np.asarray(pred_labels, dtype=np.int64).ravel()
    if truth_labels.shape != pred_labels.shape:
        raise ValueError("label vectors differ in length")
    if truth_labels.size and (
        truth_labels.min() < 0
        or pred_labels.min() < 0
        or truth_labels.max() >= n_classes
        or pred_labels.max() >= n_classes
    ):
        raise ValueError(f"labels outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth_labels, pred_labels), 1)
    return cm


def confusion_stats(cm: np.ndarray) -> dict[str, float | np.ndarray]:
    """Total accuracy, mean row-normalized diagonal and UAR of a count matrix.

    Rows with zero samples are excluded from the recall averages, which
    makes the mean diagonal and UAR identical by construction; both keys
    are reported anyway since callers ask for them under either name.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if (cm < 0).any():
        raise ValueError("confusion matrix entries must be nonnegative")
    total = cm.sum()
    if total == 0:
        raise ValueError("confusion matrix is all zero")
    row_sums = cm.sum(axis=1)
    scored = row_sums > 0
    recalls = cm.diagonal()[scored] / row_sums[scored]
    uar = float(recalls.mean())
    return {
        "total_accuracy": float(cm.trace() / total),
        "mean_diagonal": uar,
        "uar": uar,
        "per_class_recall": recalls,
    }


def challenge_scores(per_au_f1, per_au_acc, emo_f1_mean: float, uar: float) -> dict[str, float]:
    """Composite AU and expression scores used by the challenge protocols."""
    per_au_f1 = np.asarray(per_au_f1, dtype=np.float64)
    per_au_acc = np.asarray(per_au_acc, dtype=np.float64)
    if per_au_f1.size == 0 or per_au_acc.size == 0:
        raise ValueError("per-AU metric vectors must be non-empty")
    for name, vals in (("per_au_f1", per_au_f1), ("per_au_acc", per_au_acc),
                       ("emo_f1_mean", np.array([emo_f1_mean])), ("uar", np.array([uar]))):
        if ((vals < 0) | (vals > 1)).any():
            raise ValueError(f"{name} outside [0, 1]")
    return {
        "au_score": float((per_au_f1.mean() + per_au_acc.mean()) / 2.0),
        "expr_score": float((emo_f1_mean + uar) / 2.0),
    }


def write_metrics_csv(records: Iterable[Mapping[str, object]], path: str | Path) -> None:
    """Write metric records as CSV rows (task, metric, split, value)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["task", "metric", "split", "value"],
                                lineterminator="\n")
        writer.writeheader()
        for rec in records:
            row = dict(rec)
            row["value"] = repr(float(row["value"]))
            writer.writerow(row)
