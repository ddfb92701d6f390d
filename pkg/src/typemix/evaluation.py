"""Evaluation metrics for column-type and row-type predictions.

Metrics that are undefined for the given input (no positives, zero
variance, ...) are returned as ``None`` rather than a number.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats


class EvaluationError(ValueError):
    pass


def jaccard(tp: int, fp: int, fn: int) -> Optional[float]:
    """``TP / (TP + FP + FN)``, or ``None`` when all three are zero."""
    if min(tp, fp, fn) < 0:
        raise EvaluationError("counts must be nonnegative")
    denom = tp + fp + fn
    return None if denom == 0 else tp / denom


def mcnemar(n01: int, n10: int) -> Optional[float]:
    """Continuity-corrected McNemar statistic ``(|n01 - n10| - 1)^2 / (n01 + n10)``."""
    if n01 < 0 or n10 < 0:
        raise EvaluationError("counts must be nonnegative")
    total = n01 + n10
    if total == 0:
        return None
    return (abs(n01 - n10) - 1) ** 2 / total


def mcnemar_counts(correct_a: Sequence[bool], correct_b: Sequence[bool]):
    """Discordant pair counts: ``n01`` (a wrong, b right) and ``n10`` (a right, b wrong)."""
    a = np.asarray(correct_a, dtype=bool)
    b = np.asarray(correct_b, dtype=bool)
    if a.shape != b.shape:
        raise EvaluationError("length mismatch")
    return int(np.sum(~a & b)), int(np.sum(a & ~b))


@dataclass
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray

    def points(self):
        return list(zip(self.thresholds.tolist(), self.tpr.tolist(), self.fpr.tolist()))


def roc_auc(scores: Sequence[float], labels: Sequence[bool]):
    """ROC curve and trapezoidal AUC; positives are the ``True`` labels.

    A cell is predicted positive when its score is ``>=`` the threshold.
    Thresholds are the distinct scores plus sentinels 0 and 1 (and one just
    above the maximum so the curve starts at the origin).

    Returns
    -------
    (RocCurve, float) or (None, None)
        ``(None, None)`` unless both classes are present.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise EvaluationError("length mismatch")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None, None
    top = max(1.0, float(s.max()))
    thresholds = np.unique(np.concatenate([s, [0.0, 1.0]]))[::-1]
    if thresholds[0] <= top:
        thresholds = np.concatenate([[np.nextafter(top, np.inf)], thresholds])
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # number of cells with score >= threshold
    above = np.searchsorted(-s_sorted, -thresholds, side="right")
    tp_cum = np.concatenate([[0], np.cumsum(y_sorted)])
    tp = tp_cum[above]
    fp = above - tp
    tpr = tp / n_pos
    fpr = fp / n_neg
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds, tpr, fpr), min(max(auc, 0.0), 1.0)


@dataclass
class TTestResult:
    t: float
    p: float
    df: int


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> Optional[TTestResult]:
    """Two-sided paired t-test on ``a - b``; ``None`` if the differences have no spread."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise EvaluationError("paired samples must be 1-d and of equal length")
    n = a.size
    if n < 2:
        raise EvaluationError("need at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or not math.isfinite(sd):
        return None
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return TTestResult(t, p, n - 1)


@dataclass
class Confusion:
    """Counts indexed ``[predicted, truth]``; ``normalized`` columns sum to 1."""
    labels: list
    counts: np.ndarray
    normalized: np.ndarray
    empty_columns: list

    def one_vs_rest(self, label):
        i = self.labels.index(label)
        tp = int(self.counts[i, i])
        fp = int(self.counts[i].sum() - tp)
        fn = int(self.counts[:, i].sum() - tp)
        return tp, fp, fn

    def to_csv(self, normalized=True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["predicted\\truth"] + self.labels)
        mat = self.normalized if normalized else self.counts
        for lab, row in zip(self.labels, mat):
            w.writerow([lab] + [repr(float(x)) if normalized else int(x) for x in row])
        return buf.getvalue()


def confusion_matrix(predicted: Sequence[str], truth: Sequence[str], labels=None) -> Confusion:
    if len(predicted) != len(truth):
        raise EvaluationError("length mismatch")
    if labels is None:
        labels = sorted(set(predicted) | set(truth))
    labels = list(labels)
    pos = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for p, t in zip(predicted, truth):
        try:
            counts[pos[p], pos[t]] += 1
        except KeyError as exc:
            raise EvaluationError(f"label {exc.args[0]!r} not among labels") from None
    col = counts.sum(axis=0)
    normalized = np.zeros(counts.shape)
    nz = col > 0
    normalized[:, nz] = counts[:, nz] / col[nz]
    empty = [labels[i] for i in np.flatnonzero(~nz)]
    return Confusion(labels, counts, normalized, empty)


def overall_accuracy(predicted: Sequence[str], truth: Sequence[str]) -> Optional[float]:
    if len(predicted) != len(truth):
        raise EvaluationError("length mismatch")
    if not truth:
        return None
    return sum(p == t for p, t in zip(predicted, truth)) / len(truth)


@dataclass
class EvalReport:
    per_type_jaccard: dict
    overall_accuracy: Optional[float]
    confusion: Confusion
    roc: Optional[RocCurve] = None
    auc: Optional[float] = None
    mcnemar: Optional[tuple] = None      # (n01, n10, statistic)
    ttest: Optional[TTestResult] = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        c = self.confusion
        return {
            "per_type_jaccard": dict(self.per_type_jaccard),
            "overall_accuracy": self.overall_accuracy,
            "confusion": {
                "labels": list(c.labels),
                "counts": c.counts.tolist(),
                "normalized": c.normalized.tolist(),
                "empty_columns": list(c.empty_columns),
            },
            "auc": self.auc,
            "mcnemar": None if self.mcnemar is None else list(self.mcnemar),
            "ttest": None if self.ttest is None else
            {"t": self.ttest.t, "p": self.ttest.p, "df": self.ttest.df},
            "notes": list(self.notes),
        }

    def roc_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "tpr", "fpr"])
        if self.roc is not None:
            for row in self.roc.points():
                w.writerow([repr(x) for x in row])
        return buf.getvalue()


def evaluate(predicted: Sequence[str], truth: Sequence[str], labels=None,
             row_scores=None, row_truth=None, baseline_predicted=None) -> EvalReport:
    """Column-type metrics, with optional row-level ROC and a McNemar comparison.

    Parameters
    ----------
    predicted, truth : sequence of str
        Column types.
    row_scores, row_truth : sequence, optional
        Per-cell non-type probability and whether the cell truly is non-type.
    baseline_predicted : sequence of str, optional
        A competing method's column types for the McNemar test.
    """
    conf = confusion_matrix(predicted, truth, labels)
    per_type = {lab: jaccard(*conf.one_vs_rest(lab)) for lab in conf.labels}
    report = EvalReport(per_type, overall_accuracy(predicted, truth), conf)
    if row_scores is not None:
        report.roc, report.auc = roc_auc(row_scores, row_truth)
        if report.auc is None:
            report.notes.append("AUC undefined: row labels contain a single class")
    if baseline_predicted is not None:
        n01, n10 = mcnemar_counts([p == t for p, t in zip(baseline_predicted, truth)],
                                  [p == t for p, t in zip(predicted, truth)])
        report.mcnemar = (n01, n10, mcnemar(n01, n10))
    return report
