"""Incremental retraining versus training from scratch on newly discovered families."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import clone

from ..corpus import Dataset, assign_folds, merge, split_by_discovery_year
from ..exceptions import EmptySplit
from ..neural.training import TrainHistory
from .cv import _csv

log = logging.getLogger(__name__)


@dataclass
class IncrementalResult:
    base_history: TrainHistory
    incremental: TrainHistory
    scratch: TrainHistory
    train_indices: np.ndarray        # into the merged dataset
    test_indices: np.ndarray
    base_families: list
    novel_families: list
    incremental_estimator: object = None
    scratch_estimator: object = None
    base_estimator: object = None

    def early_mean(self, arm: str, epochs: int = 5) -> float:
        f1 = getattr(self, arm).val_f1[:epochs]
        return float(np.mean(f1))

    def summary(self, early_epochs: int = 5) -> dict:
        return {
            "base_families": list(self.base_families),
            "novel_families": list(self.novel_families),
            "train_samples": int(len(self.train_indices)),
            "test_samples": int(len(self.test_indices)),
            "epochs": len(self.incremental),
            "early_epochs": early_epochs,
            "incremental_early_mean_f1": self.early_mean("incremental", early_epochs),
            "scratch_early_mean_f1": self.early_mean("scratch", early_epochs),
            "incremental_final_f1": self.incremental.val_f1[-1],
            "scratch_final_f1": self.scratch.val_f1[-1],
        }

    def compare_csv(self) -> str:
        rows = [(a.epoch, repr(a.loss), repr(a.val_f1), repr(b.loss), repr(b.val_f1))
                for a, b in zip(self.incremental.records, self.scratch.records)]
        return _csv(["epoch", "incremental_loss", "incremental_f1", "scratch_loss", "scratch_f1"], rows)

    def write(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "incremental_compare.csv").write_text(self.compare_csv(), encoding="utf-8")
        (d / "base_history.csv").write_text(self.base_history.to_csv(include_seconds=False),
                                            encoding="utf-8")
        return d


def incremental_experiment(dataset: Dataset, cutoff_year: int, estimator, epochs: int | None = None,
                           base_epochs: int | None = None, holdout_folds: int = 5,
                           seed: int = 0, keep_estimators: bool = False) -> IncrementalResult:
    """Train a base model on families seen up to ``cutoff_year``, then compare
    two arms on the merged data with identical seeds and epoch counts:

    * incremental: widen the base model and keep training;
    * scratch: a fresh model with the same hyperparameters.

    Both arms are scored after every epoch on the same stratified held-out
    split (one fold of ``holdout_folds``) of the merged dataset; the base
    model never trains on those samples.
    """
    base, novel = split_by_discovery_year(dataset, cutoff_year)
    if len(base) == 0 or len(novel) == 0:
        raise EmptySplit(f"cutoff {cutoff_year} leaves {len(base)} base and {len(novel)} novel samples")
    merged = merge(base, novel)
    X = merged.sequences
    y = merged.labels
    plan = assign_folds(y, holdout_folds, seed)
    test_idx = plan.test_indices(0)
    train_idx = np.flatnonzero(plan.assignments != 0)
    n_base = len(base.family_index)
    base_train = train_idx[y[train_idx] < n_base]
    validation = ([X[i] for i in test_idx], y[test_idx])

    epochs = epochs or estimator.epochs
    base_model = clone(estimator).set_params(epochs=base_epochs or estimator.epochs)
    base_model.fit([X[i] for i in base_train], y[base_train])
    log.info("base model trained on %d samples of %d families", len(base_train), n_base)

    X_train = [X[i] for i in train_idx]
    inc = copy.deepcopy(base_model)
    inc.fit_incremental(X_train, y[train_idx], validation_data=validation, epochs=epochs)
    scratch = clone(estimator).set_params(epochs=epochs)
    scratch.fit(X_train, y[train_idx], validation_data=validation)

    return IncrementalResult(base_model.history_, inc.history_, scratch.history_, train_idx, test_idx,
                             merged.families[:n_base], merged.families[n_base:],
                             inc if keep_estimators else None, scratch if keep_estimators else None,
                             base_model if keep_estimators else None)
