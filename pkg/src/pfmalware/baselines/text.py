"""n-gram extraction and TF-IDF weighting."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import EmptyCorpus
from ..validation import check_sequences

# U+001F (unit separator) never occurs in a normalized path.
SEPARATOR = "\x1f"


def ngrams(seq, n: int) -> Counter:
    """Multiset of contiguous ``n``-token windows."""
    if n not in (2, 3):
        raise ValueError(f"n must be 2 or 3, got {n}")
    seq = list(seq)
    return Counter(SEPARATOR.join(seq[i:i + n]) for i in range(len(seq) - n + 1))


@dataclass
class TfidfModel:
    ngram_to_index: dict
    document_frequency: np.ndarray
    n_documents: int

    @property
    def idf(self) -> np.ndarray:
        """Smoothed idf: ln((1 + N) / (1 + df)) + 1."""
        return np.log((1.0 + self.n_documents) / (1.0 + self.document_frequency)) + 1.0

    @property
    def n_features(self) -> int:
        return len(self.ngram_to_index)


def fit_tfidf(corpus) -> TfidfModel:
    """``corpus`` is a list of n-gram multisets (``Counter``s)."""
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot fit TF-IDF on an empty corpus")
    df = Counter()
    for doc in corpus:
        df.update(set(doc))
    terms = sorted(df)
    return TfidfModel({t: i for i, t in enumerate(terms)},
                      np.array([df[t] for t in terms], dtype=np.float64), len(corpus))


def transform_tfidf(model: TfidfModel, multisets) -> sp.csr_matrix:
    """Rows of L2-normalized ``count * idf``; n-grams unseen at fit time are
    ignored. Column indices are sorted and every stored value is non-zero."""
    idf = model.idf
    indptr, indices, values = [0], [], []
    for doc in multisets:
        cols = sorted(model.ngram_to_index[g] for g in doc if g in model.ngram_to_index)
        lookup = {model.ngram_to_index[g]: c for g, c in doc.items() if g in model.ngram_to_index}
        row = np.array([lookup[c] for c in cols], dtype=np.float64) * idf[cols]
        norm = np.sqrt(np.sum(row * row))
        if norm > 0:
            row = row / norm
        indices.extend(cols)
        values.extend(row.tolist())
        indptr.append(len(indices))
    return sp.csr_matrix((np.array(values, dtype=np.float64), np.array(indices, dtype=np.int64),
                          np.array(indptr, dtype=np.int64)),
                         shape=(len(indptr) - 1, model.n_features))


class NgramTfidfVectorizer(TransformerMixin, BaseEstimator):
    """Token sequences -> sparse TF-IDF matrix over ``n``-grams."""

    def __init__(self, n=2):
        self.n = n

    def fit(self, X, y=None):
        self.tfidf_ = fit_tfidf(ngrams(s, self.n) for s in check_sequences(X))
        return self

    def transform(self, X):
        check_is_fitted(self, "tfidf_")
        return transform_tfidf(self.tfidf_, [ngrams(s, self.n) for s in check_sequences(X)])
