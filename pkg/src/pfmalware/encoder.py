"""Token vocabularies and fixed-length index encoding."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyCorpus
from .validation import check_sequences

PAD = 0
OOV = 1
RESERVED = ("<PAD>", "<OOV>")


@dataclass
class Vocabulary:
    index_to_token: list          # index_to_token[0:2] are the reserved names
    frequencies: list

    def __post_init__(self):
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token) if i >= len(RESERVED)}

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def lookup(self, token) -> int:
        return self.token_to_index.get(token, OOV)

    def to_tsv(self) -> str:
        lines = [f"{i}\t{t}\t{f}" for i, (t, f) in enumerate(zip(self.index_to_token, self.frequencies))]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_tsv().encode("utf-8")).hexdigest()

    @classmethod
    def from_tsv(cls, text: str) -> "Vocabulary":
        tokens, freqs = [], []
        for n, line in enumerate(text.splitlines()):
            if not line:
                continue
            idx, token, freq = line.split("\t")
            if int(idx) != n:
                raise ValueError(f"vocabulary rows must be ordered by index (row {n} has {idx})")
            tokens.append(token)
            freqs.append(int(freq))
        if len(tokens) < len(RESERVED):
            raise ValueError("vocabulary file lacks the reserved PAD/OOV rows")
        return cls(tokens, freqs)


def _ordered(counts: Counter, min_count: int) -> list:
    kept = [t for t, c in counts.items() if c >= min_count]
    return sorted(kept, key=lambda t: (-counts[t], t))


def build_vocabulary(train_sequences, min_count: int = 1) -> Vocabulary:
    """Indices 2.. for tokens seen at least ``min_count`` times, most frequent
    first, ties in lexicographic order. Build it from training data only."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for seq in train_sequences:
        counts.update(seq)
    if not counts:
        raise EmptyCorpus("no tokens to build a vocabulary from")
    tokens = _ordered(counts, min_count)
    return Vocabulary(list(RESERVED) + tokens, [0, 0] + [counts[t] for t in tokens])


def extend_vocabulary(vocab: Vocabulary, sequences, min_count: int = 1) -> Vocabulary:
    """Append unseen tokens after the existing indices, which stay unchanged."""
    counts = Counter()
    for seq in sequences:
        counts.update(t for t in seq if t not in vocab)
    tokens = _ordered(counts, min_count)
    return Vocabulary(vocab.index_to_token + tokens, vocab.frequencies + [counts[t] for t in tokens])


@dataclass(frozen=True)
class IndexSequence:
    indices: np.ndarray
    true_length: int


def encode(vocab: Vocabulary, seq, max_len: int = 256) -> IndexSequence:
    """Head-truncate to ``max_len``, map unknown tokens to OOV, right-pad with PAD."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    head = list(seq)[:max_len]
    out = np.full(max_len, PAD, dtype=np.int32)
    out[:len(head)] = [vocab.lookup(t) for t in head]
    return IndexSequence(out, len(head))


def encode_batch(vocab: Vocabulary, sequences, max_len: int = 256) -> tuple[np.ndarray, np.ndarray]:
    encoded = [encode(vocab, s, max_len) for s in sequences]
    if not encoded:
        return np.zeros((0, max_len), np.int32), np.zeros(0, np.int32)
    return (np.stack([e.indices for e in encoded]),
            np.array([e.true_length for e in encoded], dtype=np.int32))


def decode(vocab: Vocabulary, encoded: IndexSequence) -> tuple:
    return tuple(vocab.index_to_token[i] for i in encoded.indices[:encoded.true_length])


def save_vocabulary(vocab: Vocabulary, path) -> None:
    Path(path).write_text(vocab.to_tsv(), encoding="utf-8", newline="\n")


def load_vocabulary(path) -> Vocabulary:
    return Vocabulary.from_tsv(Path(path).read_text(encoding="utf-8"))


class SequenceEncoder(TransformerMixin, BaseEstimator):
    """Fit a vocabulary on token sequences; transform them into a padded
    ``(n_samples, max_len)`` index matrix."""

    def __init__(self, max_len=256, min_count=1):
        self.max_len = max_len
        self.min_count = min_count

    def fit(self, X, y=None):
        X = check_sequences(X)
        self.vocabulary_ = build_vocabulary(X, self.min_count)
        return self

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        return encode_batch(self.vocabulary_, check_sequences(X), self.max_len)[0]
