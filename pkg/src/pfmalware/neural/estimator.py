"""scikit-learn compatible wrapper around the 1D-Conv-BiLSTM."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..encoder import build_vocabulary, encode_batch, extend_vocabulary, load_vocabulary, save_vocabulary
from ..exceptions import BadK, VersionMismatch
from ..validation import check_labels, check_sequences
from .io import load_model, save_model
from .network import ModelConfig, init_model
from .training import TrainConfig, incremental_train, predict_proba, rank_classes, train

log = logging.getLogger(__name__)

MODEL_FILE = "model.pfc"
VOCAB_FILE = "vocab.tsv"


class CrnnClassifier(ClassifierMixin, BaseEstimator):
    """Malware family classifier over loaded-file token sequences.

    ``X`` is a list of token sequences (tuples of normalized paths); the
    vocabulary is fitted on the training sequences only. Hyperparameter
    defaults follow the published configuration; ``learning_rate`` and
    ``max_len`` are not published and default to 0.01 and 256.
    """

    def __init__(self, max_len=256, min_count=1, embed_dim=100, conv_filters=250, kernel_size=5,
                 pool_size=4, lstm_units=250, l2_lambda=0.02, l2_scope="output", dropout_rate=0.5,
                 recurrent_dropout_rate=0.2, batch_size=32, epochs=300, learning_rate=0.01,
                 momentum=0.9, shuffle=True, random_state=0):
        self.max_len = max_len
        self.min_count = min_count
        self.embed_dim = embed_dim
        self.conv_filters = conv_filters
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.lstm_units = lstm_units
        self.l2_lambda = l2_lambda
        self.l2_scope = l2_scope
        self.dropout_rate = dropout_rate
        self.recurrent_dropout_rate = recurrent_dropout_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.shuffle = shuffle
        self.random_state = random_state

    # -- configuration -----------------------------------------------------

    def _model_config(self, vocab_size, num_classes):
        return ModelConfig(
            vocab_size=vocab_size, num_classes=num_classes, max_len=self.max_len,
            embed_dim=self.embed_dim, conv_filters=self.conv_filters, kernel_size=self.kernel_size,
            pool_size=self.pool_size, lstm_units=self.lstm_units, l2_lambda=self.l2_lambda,
            l2_scope=self.l2_scope, dropout_rate=self.dropout_rate,
            recurrent_dropout_rate=self.recurrent_dropout_rate)

    def _train_config(self, epochs=None):
        return TrainConfig(batch_size=self.batch_size, epochs=epochs or self.epochs,
                           learning_rate=self.learning_rate, momentum=self.momentum,
                           seed=self.random_state, shuffle=self.shuffle)

    def _encode_X(self, X):
        return encode_batch(self.vocabulary_, check_sequences(X), self.max_len)[0]

    def _encode_y(self, y):
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        try:
            return np.array([lookup[v] for v in np.asarray(y).tolist()], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} is not among the fitted classes") from None

    def _validation(self, validation_data):
        if validation_data is None:
            return None
        X_val, y_val = validation_data
        return self._encode_X(X_val), self._encode_y(y_val)

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y, validation_data=None, callback=None):
        """Train from scratch. ``validation_data=(X_val, y_val)`` is scored
        after every epoch into ``history_``."""
        X = check_sequences(X)
        y = check_labels(y, len(X))
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to train a classifier")
        self.vocabulary_ = build_vocabulary(X, self.min_count)
        config = self._model_config(len(self.vocabulary_), len(self.classes_))
        self.model_ = init_model(config, self.random_state)
        self.model_, self.history_ = train(self.model_, self._encode_X(X), self._encode_y(y),
                                           self._train_config(), self._validation(validation_data),
                                           callback)
        return self

    def fit_incremental(self, X, y, validation_data=None, epochs=None, callback=None):
        """Continue training on merged data that may contain new families.

        Known classes keep their output columns; unseen labels are appended as
        new classes, and unseen tokens extend the vocabulary after the
        existing indices.
        """
        check_is_fitted(self, "model_")
        X = check_sequences(X)
        y = check_labels(y, len(X))
        known = set(self.classes_.tolist())
        new = sorted({v for v in np.asarray(y).tolist() if v not in known})
        self.classes_ = np.array(self.classes_.tolist() + new)
        self.vocabulary_ = extend_vocabulary(self.vocabulary_, X, self.min_count)
        self.model_, self.history_ = incremental_train(
            self.model_, self._encode_X(X), self._encode_y(y), len(new),
            self._train_config(epochs), vocab_size=len(self.vocabulary_),
            validation=self._validation(validation_data), callback=callback)
        return self

    # -- inference ---------------------------------------------------------

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict_proba(self.model_, self._encode_X(X))

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def predict_topk(self, X, k=5):
        """Per sample, the ``k`` most probable classes as (class, probability)
        pairs; ties rank the lower class index first."""
        check_is_fitted(self, "model_")
        if not 1 <= k <= len(self.classes_):
            raise BadK(f"k must lie in [1, {len(self.classes_)}], got {k}")
        probs = self.predict_proba(X)
        ranked = rank_classes(probs)[:, :k]
        return [[(self.classes_[c].item(), float(p[c])) for c in row] for p, row in zip(probs, ranked)]

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> Path:
        check_is_fitted(self, "model_")
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_vocabulary(self.vocabulary_, d / VOCAB_FILE)
        extra = {"estimator.params": json.dumps(self.get_params(), sort_keys=True),
                 "estimator.classes": json.dumps(self.classes_.tolist())}
        save_model(self.model_, d / MODEL_FILE, self.vocabulary_.digest(), extra)
        return d

    @classmethod
    def load(cls, directory) -> "CrnnClassifier":
        d = Path(directory)
        model, entries = load_model(d / MODEL_FILE, with_config=True)
        vocab = load_vocabulary(d / VOCAB_FILE)
        if vocab.digest() != entries.get("vocab_hash"):
            raise VersionMismatch(f"{d / VOCAB_FILE} does not match the vocabulary the model was saved with")
        est = cls(**json.loads(entries["estimator.params"]))
        est.classes_ = np.array(json.loads(entries["estimator.classes"]))
        est.vocabulary_ = vocab
        est.model_ = model
        return est
