"""Mini-batch SGD training, incremental widening and top-k prediction."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import BadConfig, BadK, IndexMismatch, NonFiniteLoss
from .network import CrnnModel, forward, glorot_uniform, loss_and_grads, sgd_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 300
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise BadConfig("batch_size must be >= 1")
        if self.epochs < 1:
            raise BadConfig("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise BadConfig("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise BadConfig("momentum must lie in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_f1: float | None
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    steps: int = 0

    def __len__(self):
        return len(self.records)

    @property
    def losses(self):
        return [r.loss for r in self.records]

    @property
    def val_f1(self):
        return [r.val_f1 for r in self.records]

    def to_csv(self, include_seconds: bool = True) -> str:
        cols = ["epoch", "loss", "val_f1"] + (["seconds"] if include_seconds else [])
        lines = [",".join(cols)]
        for r in self.records:
            row = [str(r.epoch), repr(r.loss), "" if r.val_f1 is None else repr(r.val_f1)]
            if include_seconds:
                row.append(f"{r.seconds:.3f}")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def predict_proba(model: CrnnModel, indices, batch_size: int = 256) -> np.ndarray:
    idx = np.asarray(indices)
    out = [forward(model, idx[i:i + batch_size], mode="infer")
           for i in range(0, len(idx), batch_size)]
    if not out:
        return np.zeros((0, model.config.num_classes), np.float32)
    return np.concatenate(out, axis=0)


def _validation_f1(model, validation) -> float:
    from ..evaluation.metrics import confusion, precision_recall_f1

    X_val, y_val = validation
    pred = predict_proba(model, X_val).argmax(axis=1)
    return precision_recall_f1(confusion(pred, y_val, model.config.num_classes)).weighted_f1


def train(model: CrnnModel, indices, labels, config: TrainConfig, validation=None,
          callback=None) -> tuple[CrnnModel, TrainHistory]:
    """Train ``model`` in place on encoded sequences.

    Each epoch draws a seeded permutation, then runs forward (train mode),
    backprop and one momentum-SGD step per mini-batch. ``validation`` is an
    optional ``(indices, labels)`` pair scored (weighted F1) after every epoch.
    """
    X = np.asarray(indices)
    y = np.asarray(labels, dtype=np.intp)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(X) != len(y):
        raise ValueError("indices and labels differ in length")
    rng = np.random.default_rng(config.seed)
    state = None
    history = TrainHistory()
    n = len(X)
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total, seen = 0.0, 0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = order[lo:lo + config.batch_size]
            mask_seed = int(rng.integers(2**63 - 1))
            try:
                loss, grads = loss_and_grads(model, X[batch], y[batch], mode="train", seed=mask_seed)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(exc.loss, epoch=epoch, batch=b) from None
            _, state = sgd_step(model, grads, state, config.learning_rate, config.momentum)
            history.steps += 1
            total += loss * len(batch)
            seen += len(batch)
        val_f1 = _validation_f1(model, validation) if validation is not None else None
        rec = EpochRecord(epoch, total / seen, val_f1, time.perf_counter() - start)
        history.records.append(rec)
        log.debug("epoch %d loss %.4f val_f1 %s", epoch, rec.loss, val_f1)
        if callback is not None:
            callback(model, rec)
    return model, history


def widen_model(pretrained: CrnnModel, num_classes: int, vocab_size: int | None = None,
                seed: int = 0) -> CrnnModel:
    """Copy of ``pretrained`` with extra output classes (and optionally extra
    embedding rows). Existing weights are copied bit for bit; new dense columns
    are Glorot-initialized with zero bias, new embedding rows U(-0.05, 0.05)."""
    cfg = pretrained.config
    old_c = cfg.num_classes
    vocab_size = cfg.vocab_size if vocab_size is None else vocab_size
    if num_classes < old_c:
        raise IndexMismatch(f"cannot shrink the output layer from {old_c} to {num_classes} classes")
    if vocab_size < cfg.vocab_size:
        raise IndexMismatch(f"cannot shrink the vocabulary from {cfg.vocab_size} to {vocab_size}")
    rng = np.random.default_rng(seed)
    new_cfg = cfg.replace(num_classes=num_classes, vocab_size=vocab_size)
    model = pretrained.copy()
    model.config = new_cfg
    p = model.params
    if num_classes > old_c:
        extra = num_classes - old_c
        fresh = glorot_uniform(rng, (p["dense_kernel"].shape[0], extra),
                               p["dense_kernel"].shape[0], num_classes)
        p["dense_kernel"] = np.concatenate([p["dense_kernel"], fresh], axis=1)
        p["dense_bias"] = np.concatenate([p["dense_bias"], np.zeros(extra, np.float32)])
    if vocab_size > cfg.vocab_size:
        rows = rng.uniform(-0.05, 0.05, size=(vocab_size - cfg.vocab_size, cfg.embed_dim))
        p["embedding"] = np.concatenate([p["embedding"], rows.astype(np.float32)], axis=0)
    return model


def incremental_train(pretrained: CrnnModel, indices, labels, new_families: int,
                      config: TrainConfig, vocab_size: int | None = None,
                      validation=None, callback=None) -> tuple[CrnnModel, TrainHistory]:
    """Widen the output layer by ``new_families`` classes, keep every other
    pretrained weight, then continue training on the merged data."""
    if new_families < 0:
        raise IndexMismatch("new_families must be non-negative")
    num_classes = pretrained.config.num_classes + new_families
    y = np.asarray(labels)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise IndexMismatch(
            f"labels span [{y.min()}, {y.max()}] but the widened model has {num_classes} classes")
    model = widen_model(pretrained, num_classes, vocab_size, seed=config.seed)
    return train(model, indices, labels, config, validation=validation, callback=callback)


def rank_classes(probs: np.ndarray) -> np.ndarray:
    """Class indices by descending probability; ties go to the lower index."""
    return np.argsort(-np.asarray(probs), axis=-1, kind="stable")


def predict_topk(model: CrnnModel, indices, k: int, families=None) -> list[tuple]:
    """Top-``k`` (family, probability) pairs for one encoded sequence."""
    C = model.config.num_classes
    if not 1 <= k <= C:
        raise BadK(f"k must lie in [1, {C}], got {k}")
    probs = forward(model, np.asarray(indices)[None, :] if np.ndim(indices) == 1 else indices,
                    mode="infer")[0]
    names = list(range(C)) if families is None else list(families)
    return [(names[c], float(probs[c])) for c in rank_classes(probs)[:k]]
