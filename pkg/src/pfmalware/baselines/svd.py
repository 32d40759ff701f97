"""Randomized truncated SVD for sparse TF-IDF matrices."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import RankTooLarge


def truncated_svd(matrix, rank: int, seed: int = 0, n_oversamples: int = 10, n_iter: int = 7):
    """Top-``rank`` singular triplets by randomized range finding.

    Returns ``(US, V, s)``: the ``N x r`` projected data ``U * s``, the
    ``D x r`` right singular vectors, and singular values in non-increasing
    order. Power iterations are re-orthonormalized at every step.
    """
    A = matrix.tocsr() if sp.issparse(matrix) else np.asarray(matrix, dtype=np.float64)
    N, D = A.shape
    if not 1 <= rank <= min(N, D):
        raise RankTooLarge(f"rank must lie in [1, {min(N, D)}], got {rank}")
    rng = np.random.default_rng(seed)
    width = min(rank + n_oversamples, min(N, D))
    Q, _ = np.linalg.qr(A @ rng.standard_normal((D, width)))
    for _ in range(n_iter):
        Z, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Z)
    B = np.asarray((A.T @ Q).T)                          # width x D
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    U = Q @ Ub[:, :rank]
    s = s[:rank]
    V = Vt[:rank].T
    # deterministic sign: largest-magnitude entry of each V column positive
    signs = np.sign(V[np.abs(V).argmax(axis=0), np.arange(rank)])
    signs[signs == 0] = 1
    return U * (s * signs), V * signs, s


def project(V, X) -> np.ndarray:
    """Coordinates of row vector(s) ``X`` in the basis ``V``."""
    return np.asarray(X @ np.asarray(V, dtype=np.float64))


class TruncatedSVDTransformer(TransformerMixin, BaseEstimator):
    """Dimensionality reduction for the forest pipeline.

    ``n_components`` is clipped to ``min(n_samples, n_features)`` with a
    warning so grid points stay valid on small folds.
    """

    def __init__(self, n_components=100, random_state=0):
        self.n_components = n_components
        self.random_state = random_state

    def fit(self, X, y=None):
        limit = min(X.shape)
        rank = self.n_components
        if rank > limit:
            warnings.warn(f"n_components={rank} exceeds min(X.shape)={limit}; using {limit}",
                          stacklevel=2)
            rank = limit
        _, V, s = truncated_svd(X, rank, seed=self.random_state)
        self.components_ = V.astype(np.float32)
        self.singular_values_ = s
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        return project(self.components_, X)
