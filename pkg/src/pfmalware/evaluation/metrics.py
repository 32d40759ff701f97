"""Confusion matrices, precision/recall/F1 and top-k F1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import BadK, LengthMismatch


@dataclass
class ConfusionMatrix:
    counts: np.ndarray                 # rows = truth, columns = prediction
    class_names: list | None = None

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricSet:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    # classes whose precision or recall had a zero denominator (reported as 0)
    zero_division: list

    def as_dict(self, class_names=None) -> dict:
        names = class_names if class_names is not None else list(range(len(self.f1)))
        return {
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": [
                {"class": names[c], "precision": float(self.precision[c]), "recall": float(self.recall[c]),
                 "f1": float(self.f1[c]), "support": int(self.support[c])}
                for c in range(len(self.f1))
            ],
            "zero_division": [names[c] for c in self.zero_division],
        }


def confusion(predictions, truth, n_classes: int, class_names=None) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.intp).ravel()
    true = np.asarray(truth, dtype=np.intp).ravel()
    if pred.shape != true.shape:
        raise LengthMismatch(f"{len(pred)} predictions for {len(true)} labels")
    for name, arr in (("predictions", pred), ("truth", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, class_names)


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def precision_recall_f1(cm: ConfusionMatrix) -> MetricSet:
    """Per-class P = diag/column sum, R = diag/row sum, F1 = 2PR/(P+R).

    Zero denominators yield 0 and are listed in ``zero_division``.
    """
    counts = np.asarray(cm.counts, dtype=np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    zero = [int(c) for c in np.flatnonzero((predicted == 0) | (support == 0))]

    total = support.sum()
    macro = float(f1.mean()) if len(f1) else 0.0
    weighted = float((f1 * support).sum() / total) if total else 0.0
    # single-label: global P = R = accuracy
    micro_p = float(tp.sum() / predicted.sum()) if predicted.sum() else 0.0
    micro_r = float(tp.sum() / total) if total else 0.0
    micro = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    return MetricSet(precision, recall, f1, support.astype(np.int64), macro, micro, weighted, zero)


def topk_predictions(probabilities, truth, k: int) -> np.ndarray:
    """Effective predictions: the true class when it ranks in the top ``k``
    (ties broken toward the lower class index), otherwise the top-1 class."""
    probs = np.asarray(probabilities)
    true = np.asarray(truth, dtype=np.intp)
    n, C = probs.shape
    if not 1 <= k <= C:
        raise BadK(f"k must lie in [1, {C}], got {k}")
    if len(true) != n:
        raise LengthMismatch(f"{n} probability rows for {len(true)} labels")
    ranked = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    hit = (ranked == true[:, None]).any(axis=1)
    return np.where(hit, true, ranked[:, 0])


def topk_f1(probabilities, truth, k: int, average: str = "weighted") -> float:
    probs = np.asarray(probabilities)
    eff = topk_predictions(probs, truth, k)
    ms = precision_recall_f1(confusion(eff, truth, probs.shape[1]))
    return {"weighted": ms.weighted_f1, "macro": ms.macro_f1, "micro": ms.micro_f1}[average]
