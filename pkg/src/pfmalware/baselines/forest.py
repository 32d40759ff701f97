"""Random forest of CART trees split on Gini impurity."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import Degenerate
from ..validation import check_classification_targets

LEAF = -1


@dataclass
class Tree:
    """Flat node arrays; ``feature[i] == LEAF`` marks a leaf whose class
    distribution is ``value[i]``."""
    feature: np.ndarray
    threshold: np.ndarray        # float32
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray            # (n_nodes, C) float32, rows sum to 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            active = feat != LEAF
            if not active.any():
                return node
            go_left = X[rows, np.where(active, feat, 0)] <= self.threshold[node]
            node = np.where(active, np.where(go_left, self.left[node], self.right[node]), node)

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)].astype(np.float64)


@dataclass
class ForestModel:
    trees: list
    n_classes: int
    features_per_split: int

    @property
    def trees_count(self) -> int:
        return len(self.trees)


def _dense(X) -> np.ndarray:
    return X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)


def _best_split(X, y_onehot, idx, features, min_leaf):
    """Lowest weighted Gini over ``features`` for the rows ``idx``; returns
    ``(impurity, feature, threshold)`` or None when nothing splits."""
    Xn = X[np.ix_(idx, features)]
    order = np.argsort(Xn, axis=0, kind="stable")
    vals = np.take_along_axis(Xn, order, axis=0)
    cum = np.cumsum(y_onehot[idx][order], axis=0)[:-1]          # (n-1, m, C)
    n = len(idx)
    total = y_onehot[idx].sum(axis=0)
    nl = np.arange(1, n)[:, None]
    nr = n - nl
    right = total - cum
    gini_l = 1.0 - np.sum(cum * cum, axis=2) / (nl * nl)
    gini_r = 1.0 - np.sum(right * right, axis=2) / (nr * nr)
    score = (nl * gini_l + nr * gini_r) / n
    valid = (vals[1:] > vals[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    # first minimum in feature-visit order, then position
    flat = np.argmin(score.T)
    col, pos = divmod(int(flat), n - 1)
    thr = np.float32((vals[pos, col] + vals[pos + 1, col]) / 2.0)
    if not vals[pos, col] <= thr < vals[pos + 1, col]:
        thr = np.float32(vals[pos, col])
        if not thr < vals[pos + 1, col]:
            return None
    return float(score[pos, col]), int(features[col]), thr


def build_tree(X, y, n_classes: int, features_per_split: int, rng,
               max_depth: int | None = None, min_leaf: int = 1, rows=None) -> Tree:
    """CART on the given rows (a bootstrap sample may repeat rows). Each split
    examines features in random order until ``features_per_split`` of them
    have been tried, continuing past constant features if none split."""
    X = _dense(X)
    y = np.asarray(y, dtype=np.intp)
    y_onehot = np.eye(n_classes)[y]
    rows = np.arange(len(y)) if rows is None else np.asarray(rows)
    D = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        hist = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        feature.append(LEAF)
        threshold.append(np.float32(0))
        left.append(LEAF)
        right.append(LEAF)
        value.append((hist / hist.sum()).astype(np.float32))
        return len(feature) - 1

    stack = [(rows, 0, new_node(rows))]
    while stack:
        idx, depth, node = stack.pop()
        if len(np.unique(y[idx])) < 2 or len(idx) < 2 * min_leaf:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        perm = rng.permutation(D)
        found = None
        for start in range(0, D, features_per_split):
            found = _best_split(X, y_onehot, idx, perm[start:start + features_per_split], min_leaf)
            if found is not None:
                break
        if found is None:
            continue
        _, f, thr = found
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        if len(li) < min_leaf or len(ri) < min_leaf:
            continue
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((ri, depth + 1, right[node]))
        stack.append((li, depth + 1, left[node]))
    return Tree(np.array(feature, dtype=np.intp), np.array(threshold, dtype=np.float32),
                np.array(left, dtype=np.intp), np.array(right, dtype=np.intp), np.stack(value))


def train_forest(X, y, trees: int = 100, features_per_split: int | None = None,
                 max_depth: int | None = None, min_leaf: int = 1, seed: int = 0,
                 bootstrap: bool = True, n_classes: int | None = None):
    """Returns ``(forest, oob_score)``; ``oob_score`` is NaN without bootstrap
    or when no sample was ever out of bag. Tree ``t`` uses its own child seed
    of ``seed``, so the first trees do not depend on ``trees``."""
    X = _dense(X)
    y = np.asarray(y, dtype=np.intp)
    N, D = X.shape
    if N < 2:
        raise Degenerate("a forest needs at least two samples")
    if trees < 1:
        raise ValueError("trees must be >= 1")
    C = int(n_classes if n_classes is not None else y.max() + 1)
    m = features_per_split or math.ceil(math.sqrt(D))
    m = max(1, min(m, D))
    oob_votes = np.zeros((N, C))
    built = []
    for child in np.random.SeedSequence(seed).spawn(trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, N, N) if bootstrap else np.arange(N)
        tree = build_tree(X, y, C, m, rng, max_depth, min_leaf, rows)
        built.append(tree)
        if bootstrap:
            out = np.setdiff1d(np.arange(N), rows)
            if len(out):
                oob_votes[out] += tree.predict_proba(X[out])
    seen = oob_votes.sum(axis=1) > 0
    oob = float(np.mean(oob_votes[seen].argmax(axis=1) == y[seen])) if seen.any() else float("nan")
    return ForestModel(built, C, m), oob


def forest_predict_proba(forest: ForestModel, X) -> np.ndarray:
    X = _dense(X)
    total = np.zeros((len(X), forest.n_classes))
    for tree in forest.trees:
        total += tree.predict_proba(X)
    return total / forest.trees_count


class ForestClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, trees=100, features_per_split=None, max_depth=None, min_leaf=1,
                 bootstrap=True, random_state=0):
        self.trees = trees
        self.features_per_split = features_per_split
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        self.classes_, encoded = check_classification_targets(y, X.shape[0])
        self.model_, self.oob_score_ = train_forest(
            X, encoded, self.trees, self.features_per_split, self.max_depth, self.min_leaf,
            self.random_state, self.bootstrap, len(self.classes_))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return forest_predict_proba(self.model_, X)

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
