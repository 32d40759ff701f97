"""Stratified cross-validation, per-family analysis and report files."""
from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import clone

from ..corpus import Dataset, FoldPlan, stratified_folds
from .metrics import MetricSet, confusion, precision_recall_f1, topk_f1

log = logging.getLogger(__name__)

DEFAULT_TOPK = (1, 2, 3, 5, 10, 25)


def full_proba(estimator, X, n_classes: int) -> np.ndarray:
    """``predict_proba`` spread over all ``n_classes`` columns; classes the
    estimator never saw in training get probability 0."""
    probs = np.asarray(estimator.predict_proba(X), dtype=np.float64)
    out = np.zeros((len(probs), n_classes))
    out[:, np.asarray(estimator.classes_, dtype=np.intp)] = probs
    return out


@dataclass
class CvReport:
    families: list
    family_counts: dict
    plan: FoldPlan
    folds: list[MetricSet]
    topk: dict                          # k -> per-fold weighted top-k F1
    oof_probabilities: np.ndarray       # out-of-fold predictions, (N, C)
    estimators: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.folds)

    def fold_scores(self, average: str = "weighted") -> np.ndarray:
        return np.array([getattr(m, f"{average}_f1") for m in self.folds])

    def mean(self, average: str = "weighted") -> float:
        return float(self.fold_scores(average).mean())

    def std(self, average: str = "weighted") -> float:
        return float(self.fold_scores(average).std())

    def per_family_f1(self) -> dict:
        """Mean F1 per family over the folds whose test part contains it;
        families absent from every test fold are left out."""
        out = {}
        for c, fam in enumerate(self.families):
            scores = [m.f1[c] for m in self.folds if m.support[c] > 0]
            if scores:
                out[fam] = float(np.mean(scores))
        return out

    def topk_curve(self) -> list[tuple[int, float]]:
        return [(k, float(np.mean(v))) for k, v in sorted(self.topk.items())]

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.plan.seed,
            "families": list(self.families),
            "family_counts": dict(self.family_counts),
            "flagged_classes": [self.families[c] for c in self.plan.flagged],
            "aggregate": {avg: {"mean": self.mean(avg), "std": self.std(avg)}
                          for avg in ("weighted", "macro", "micro")},
            "folds": [m.as_dict(self.families) for m in self.folds],
            "per_family_f1": self.per_family_f1(),
            "topk_curve": [{"k": k, "f1": v} for k, v in self.topk_curve()],
        }


def cross_validate(estimator, dataset: Dataset, k: int = 10, seed: int = 0,
                   topk=DEFAULT_TOPK, keep_estimators: bool = False, callback=None) -> CvReport:
    """Fit a fresh clone of ``estimator`` on each training part and score the
    held-out fold. Every feature extractor (vocabulary, TF-IDF, SVD) lives in
    the estimator and is therefore fitted on training folds only."""
    plan = stratified_folds(dataset, k, seed)
    X = dataset.sequences
    y = dataset.labels
    C = dataset.n_classes
    ks = [kk for kk in topk if kk <= C]
    oof = np.zeros((len(y), C))
    folds, fitted = [], []
    scores = {kk: [] for kk in ks}
    for fold, (train_idx, test_idx) in enumerate(plan.split()):
        est = clone(estimator).fit([X[i] for i in train_idx], y[train_idx])
        probs = full_proba(est, [X[i] for i in test_idx], C)
        oof[test_idx] = probs
        cm = confusion(probs.argmax(axis=1), y[test_idx], C, dataset.families)
        metrics = precision_recall_f1(cm)
        folds.append(metrics)
        for kk in ks:
            scores[kk].append(topk_f1(probs, y[test_idx], kk))
        if keep_estimators:
            fitted.append(est)
        log.info("fold %d/%d weighted F1 %.4f macro F1 %.4f", fold + 1, k,
                 metrics.weighted_f1, metrics.macro_f1)
        if callback is not None:
            callback(fold, metrics)
    return CvReport(dataset.families, dataset.family_counts(), plan, folds, scores, oof, fitted)


def per_family_curve(report: CvReport) -> list[tuple[str, int, float]]:
    """``(family, sample_count, mean F1)`` sorted by ascending sample count
    (ties by family name)."""
    scored = report.per_family_f1()
    missing = [f for f in report.families if f not in scored]
    if missing:
        warnings.warn(f"families never in a test fold are excluded: {missing}", stacklevel=2)
    rows = [(f, int(report.family_counts[f]), scored[f]) for f in scored]
    return sorted(rows, key=lambda r: (r[1], r[0]))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def per_family_csv(report: CvReport) -> str:
    rows = [(f, n, f"{np.log10(n):.6f}", repr(s)) for f, n, s in per_family_curve(report)]
    return _csv(["family", "sample_count", "log10_count", "mean_f1"], rows)


def topk_csv(report: CvReport) -> str:
    return _csv(["k", "weighted_f1"], [(k, repr(v)) for k, v in report.topk_curve()])


def write_cv_reports(report: CvReport, directory) -> Path:
    """Writes ``cv_report.json``, ``per_family.csv`` and ``topk_curve.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        (d / "per_family.csv").write_text(per_family_csv(report), encoding="utf-8")
    (d / "cv_report.json").write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    (d / "topk_curve.csv").write_text(topk_csv(report), encoding="utf-8")
    return d
