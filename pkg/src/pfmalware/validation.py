"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np


def check_sequences(X, allow_empty_sequences=True) -> list[tuple]:
    """Coerce ``X`` into a list of token tuples.

    Accepts any iterable of iterables of strings. A bare string is rejected
    because iterating it would silently yield characters.
    """
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a collection of token sequences, got a single string")
    out = []
    for n, seq in enumerate(X):
        if isinstance(seq, (str, bytes)):
            raise TypeError(f"sequence {n} is a string; expected a sequence of tokens")
        tokens = tuple(seq)
        for t in tokens:
            if not isinstance(t, str):
                raise TypeError(f"sequence {n} holds a non-string token {t!r}")
        if not tokens and not allow_empty_sequences:
            raise ValueError(f"sequence {n} is empty")
        out.append(tokens)
    return out


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"y must be one-dimensional, got shape {y.shape}")
    if len(y) != n_samples:
        raise ValueError(f"X has {n_samples} samples but y has {len(y)}")
    return y


def check_classification_targets(y, n_samples: int):
    """Returns ``(classes, encoded)`` with ``encoded`` in ``[0, len(classes))``."""
    y = check_labels(y, n_samples)
    classes, encoded = np.unique(y, return_inverse=True)
    return classes, encoded.astype(np.intp)
