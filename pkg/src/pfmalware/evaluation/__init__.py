from .cv import CvReport, cross_validate, per_family_curve, write_cv_reports
from .incremental import IncrementalResult, incremental_experiment
from .metrics import ConfusionMatrix, MetricSet, confusion, precision_recall_f1, topk_f1, topk_predictions

__all__ = [
    "ConfusionMatrix", "CvReport", "IncrementalResult", "MetricSet", "confusion", "cross_validate",
    "incremental_experiment", "per_family_curve", "precision_recall_f1", "topk_f1",
    "topk_predictions", "write_cv_reports",
]
