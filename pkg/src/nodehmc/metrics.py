"""Confusion-matrix statistics and threshold-sweep curves for binary scores."""
from dataclasses import dataclass

import numpy as np

from .errors import HmcError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise HmcError(f"scores and labels differ in length ({len(s)} != {len(y)})")
    if len(s) == 0:
        raise HmcError("empty score vector")
    return s, y


def _require_both(y):
    if y.all() or not y.any():
        raise HmcError("labels contain a single class")


def confusion(scores, labels, threshold):
    """Tally predictions ``score >= threshold`` against binary labels."""
    s, y = _as_arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    return ConfusionMatrix(tp, fp, tn, fn)


def tpr(cm):
    d = cm.tp + cm.fn
    return cm.tp / d if d else 0.0


recall = tpr


def tnr(cm):
    d = cm.tn + cm.fp
    return cm.tn / d if d else 0.0


def precision(cm):
    d = cm.tp + cm.fp
    return cm.tp / d if d else 0.0


def f1(cm):
    """Harmonic mean of precision and recall; 0 when both are 0."""
    d = 2 * cm.tp + cm.fp + cm.fn
    return 2 * cm.tp / d if d else 0.0


@dataclass(frozen=True)
class CurvePoints:
    """Threshold sweep. ``x``/``y`` are (recall, precision) for PR curves and
    (fpr, tpr) for ROC curves; ``thresholds`` strictly decrease and start at +inf."""

    kind: str
    thresholds: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def recall(self):
        return self.x

    @property
    def precision(self):
        return self.y


def _sweep(s, y):
    """Cumulative tp/fp at each distinct score, scanning from the highest."""
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp = np.cumsum(y_sorted)[last]
    fp = np.cumsum(~y_sorted)[last]
    return s_sorted[last], tp, fp


def pr_curve(scores, labels):
    s, y = _as_arrays(scores, labels)
    _require_both(y)
    thr, tp, fp = _sweep(s, y)
    prec = tp / (tp + fp)
    rec = tp / y.sum()
    return CurvePoints(
        "pr",
        np.r_[np.inf, thr],
        np.r_[0.0, rec],
        np.r_[1.0, prec],
    )


def roc_curve(scores, labels):
    s, y = _as_arrays(scores, labels)
    _require_both(y)
    thr, tp, fp = _sweep(s, y)
    return CurvePoints(
        "roc",
        np.r_[np.inf, thr],
        np.r_[0.0, fp / (~y).sum()],
        np.r_[0.0, tp / y.sum()],
    )


def average_precision(scores, labels):
    """Step-wise (non-interpolated) area under the PR curve."""
    c = pr_curve(scores, labels)
    return float(np.sum(np.diff(c.recall) * c.precision[1:]))


def roc_auc(scores, labels):
    """Trapezoidal area under the ROC curve; tied scores count half."""
    c = roc_curve(scores, labels)
    return float(np.trapezoid(c.y, c.x)) if hasattr(np, "trapezoid") else float(np.trapz(c.y, c.x))


def optimum_threshold(scores, labels, return_f1=False):
    """Threshold among the distinct scores that maximizes F1 of ``score >= t``.

    Ties go to the smallest threshold. F1 is evaluated as ``2tp / (2tp+fp+fn)``,
    so equal rationals compare equal in floating point.
    """
    s, y = _as_arrays(scores, labels)
    _require_both(y)
    thr, tp, fp = _sweep(s, y)
    fn = y.sum() - tp
    f = 2 * tp / (2 * tp + fp + fn)
    best = np.flatnonzero(f == f.max())[-1]
    t = float(thr[best])
    return (t, float(f[best])) if return_f1 else t


def class_report(scores, labels, threshold):
    """Summary statistics at ``threshold`` plus threshold-free AP and AUC."""
    cm = confusion(scores, labels, threshold)
    return {
        "threshold": float(threshold),
        "tp": cm.tp,
        "fp": cm.fp,
        "tn": cm.tn,
        "fn": cm.fn,
        "tpr": tpr(cm),
        "tnr": tnr(cm),
        "precision": precision(cm),
        "f1": f1(cm),
        "average_precision": average_precision(scores, labels),
        "roc_auc": roc_auc(scores, labels),
    }


def write_curve_csv(curve, path):
    names = ("threshold,precision,recall" if curve.kind == "pr" else "threshold,fpr,tpr")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(names + "\n")
        if curve.kind == "pr":
            cols = (curve.thresholds, curve.precision, curve.recall)
        else:
            cols = (curve.thresholds, curve.x, curve.y)
        for t, a, b in zip(*cols):
            fh.write(f"{float(t)!r},{float(a)!r},{float(b)!r}\n")
