"""Multinomial logistic regression by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import Degenerate
from ..validation import check_classification_targets


@dataclass
class LogRegModel:
    weights: np.ndarray          # (D, C)
    bias: np.ndarray             # (C,)
    l2_strength: float
    iterations: int = 0
    gradient_norm: float = float("nan")


def _as_matrix(X):
    return X.tocsr().astype(np.float64) if sp.issparse(X) else np.asarray(X, dtype=np.float64)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def objective_and_gradient(W, b, X, Y, l2):
    """Mean cross-entropy plus ``l2/2 * ||W||^2``; ``Y`` is one-hot (N, C)."""
    z = np.asarray(X @ W) + b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = X.shape[0]
    f = -np.sum(Y * logp) / n + 0.5 * l2 * np.sum(W * W)
    R = (np.exp(logp) - Y) / n
    return f, np.asarray(X.T @ R) + l2 * W, R.sum(axis=0)


def train_logreg(X, y, l2_strength: float = 0.01, n_classes: int | None = None,
                 tol: float = 1e-5, max_iter: int = 1000) -> LogRegModel:
    """Backtracking (Armijo) gradient descent from zero weights; stops when the
    full gradient norm drops to ``tol`` or after ``max_iter`` steps."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.intp)
    C = int(n_classes if n_classes is not None else y.max() + 1)
    if len(np.unique(y)) < 2:
        raise Degenerate("logistic regression needs at least two distinct classes")
    if l2_strength < 0:
        raise ValueError("l2_strength must be >= 0")
    Y = np.zeros((len(y), C))
    Y[np.arange(len(y)), y] = 1.0
    W = np.zeros((X.shape[1], C))
    b = np.zeros(C)
    f, gW, gb = objective_and_gradient(W, b, X, Y, l2_strength)
    step = 1.0
    it = 0
    gnorm2 = np.sum(gW * gW) + np.sum(gb * gb)
    while it < max_iter and np.sqrt(gnorm2) > tol:
        step *= 2.0
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            f_new, gW_new, gb_new = objective_and_gradient(W_new, b_new, X, Y, l2_strength)
            if f_new <= f - 0.5 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        W, b, f, gW, gb = W_new, b_new, f_new, gW_new, gb_new
        gnorm2 = np.sum(gW * gW) + np.sum(gb * gb)
        it += 1
    return LogRegModel(W, b, float(l2_strength), it, float(np.sqrt(gnorm2)))


def logreg_predict_proba(model: LogRegModel, X) -> np.ndarray:
    X = _as_matrix(X)
    return _softmax(np.asarray(X @ np.asarray(model.weights, np.float64)) + model.bias)


class LogisticRegressionClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper; fitted coefficients are rounded to float32 so a
    saved model predicts exactly like the in-memory one."""

    def __init__(self, l2_strength=0.01, tol=1e-5, max_iter=1000):
        self.l2_strength = l2_strength
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self.classes_, encoded = check_classification_targets(y, X.shape[0])
        model = train_logreg(X, encoded, self.l2_strength, len(self.classes_), self.tol, self.max_iter)
        model.weights = model.weights.astype(np.float32)
        model.bias = model.bias.astype(np.float32)
        self.model_ = model
        self.n_iter_ = model.iterations
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return logreg_predict_proba(self.model_, X)

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
