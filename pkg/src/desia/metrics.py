"""ROC construction, AUC, TPR at low FPR, and report emission.

Tied scores move together (one threshold per distinct score), AUC is the
trapezoidal area, and TPR@kFPR uses conservative step interpolation: the
best achieved operating point with FPR <= k, never an interpolated one.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ParameterError

if TYPE_CHECKING:  # pragma: no cover
    from .harness import GameRun


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Operating points from (0,0) to (1,1); fpr and tpr are non-decreasing."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        f, t = self.fpr, self.tpr
        if f.shape != t.shape or f.shape != self.thresholds.shape:
            raise ParameterError("curve arrays must align")
        if (np.diff(f) < 0).any() or (np.diff(t) < 0).any():
            raise ParameterError("fpr/tpr must be non-decreasing")
        if f[0] != 0 or t[0] != 0 or f[-1] != 1 or t[-1] != 1:
            raise ParameterError("curve must span (0,0) to (1,1)")


def roc(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """Threshold sweep over distinct scores; predict positive when score >= t."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ParameterError("scores and labels must be equal-length vectors")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("both classes must be present")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    # group boundaries where the score changes
    distinct = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.concatenate([distinct, [len(s_sorted) - 1]])
    tp = np.cumsum(y_sorted == 1)[ends]
    fp = np.cumsum(y_sorted == 0)[ends]
    fpr = np.concatenate([[0.0], fp / n_neg])
    tpr = np.concatenate([[0.0], tp / n_pos])
    thresholds = np.concatenate([[np.inf], s_sorted[ends]])
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area; equals P(score_pos > score_neg) + 0.5 P(tie)."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def tpr_at_fpr(curve: RocCurve, k: float) -> float:
    """Largest TPR among operating points with FPR <= k (no interpolation)."""
    if not 0.0 < k < 1.0:
        raise ParameterError("k must be in (0, 1)")
    ok = curve.fpr <= k
    return float(curve.tpr[ok].max())


def auc_scores(scores: Sequence[float], labels: Sequence[int]) -> float:
    return auc(roc(scores, labels))


DEFAULT_KS = (0.1, 0.01, 0.001)


def summarize(
    run: "GameRun",
    ks: Sequence[float] = DEFAULT_KS,
    out_dir: str | Path | None = None,
) -> dict:
    """Accuracy, AUC, TPR@k, deterministic coverage, per-method breakdown.

    Binary truths get the full ROC treatment; with more than two classes only
    accuracy is reported. When ``out_dir`` is given, writes report.json and a
    fpr,tpr,threshold CSV of the ROC points.
    """
    results = run.results
    report: dict = {"n_targets": len(results), "metadata": dict(run.metadata)}
    if not results:
        warnings.warn("empty game run; nothing to summarize", RuntimeWarning, stacklevel=2)
        report.update({"accuracy": None, "auc": None, "deterministic_coverage": None})
        curve = None
    else:
        truths = np.asarray([r.truth for r in results], dtype=np.int64)
        preds = np.asarray([r.prediction for r in results], dtype=np.int64)
        scores = np.asarray([r.score for r in results], dtype=float)
        det = np.asarray([r.deterministic for r in results], dtype=bool)
        report["accuracy"] = float((preds == truths).mean())
        report["deterministic_coverage"] = float(det.mean())
        binary = set(np.unique(truths)) <= {0, 1}
        curve = None
        if binary and len(np.unique(truths)) == 2:
            curve = roc(scores, truths)
            report["auc"] = auc(curve)
            report["tpr_at_fpr"] = {str(k): tpr_at_fpr(curve, k) for k in ks}
        else:
            report["auc"] = None
        methods: dict[str, dict] = {}
        for m in sorted(set(r.method for r in results)):
            idx = np.asarray([r.method == m for r in results], dtype=bool)
            methods[m] = {
                "n": int(idx.sum()),
                "accuracy": float((preds[idx] == truths[idx]).mean()),
                "deterministic_coverage": float(det[idx].mean()),
            }
        report["methods"] = methods

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
        if curve is not None:
            with open(out / "roc.csv", "w", encoding="utf-8", newline="") as f:
                w = csv.writer(f)
                w.writerow(["fpr", "tpr", "threshold"])
                for fp, tp, th in zip(curve.fpr, curve.tpr, curve.thresholds):
                    w.writerow([repr(float(fp)), repr(float(tp)), repr(float(th))])
    return report
