"""Finite-difference verification of the hand-written backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .network import PARAM_NAMES, CrnnModel, ModelConfig, init_model

TINY_CONFIG = ModelConfig(vocab_size=20, num_classes=5, max_len=12, embed_dim=4,
                          conv_filters=3, lstm_units=3)

# Denominator floor of the relative error. Central differences of a float64
# loss carry ~1e-12 of rounding noise at eps=1e-4, so gradient entries below
# 1e-6 are judged on an absolute scale instead.
RELATIVE_FLOOR = {"float32": 1e-6, "float64": 1e-6}


@dataclass
class GradCheckReport:
    max_relative_error: dict
    tolerance: float
    dtype: str

    @property
    def failed_blocks(self) -> list[str]:
        return [n for n, e in self.max_relative_error.items() if not e <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failed_blocks

    def lines(self) -> list[str]:
        out = [f"{name:20s} {err:.3e} {'ok' if err <= self.tolerance else 'FAIL'}"
               for name, err in self.max_relative_error.items()]
        out.append(f"{'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g}, {self.dtype})")
        return out


def numeric_gradients(model: CrnnModel, indices, labels, epsilon: float = 1e-4) -> dict:
    """Central differences of the float64 loss, one parameter at a time."""
    probe = CrnnModel(model.config, {k: v.astype(np.float64) for k, v in model.params.items()})
    grads = {}
    for name in PARAM_NAMES:
        w = probe.params[name]
        g = np.zeros_like(w)
        for pos in np.ndindex(w.shape):
            old = w[pos]
            w[pos] = old + epsilon
            up, _ = network.loss_and_grads(probe, indices, labels, mode="infer", dtype=np.float64)
            w[pos] = old - epsilon
            down, _ = network.loss_and_grads(probe, indices, labels, mode="infer", dtype=np.float64)
            w[pos] = old
            g[pos] = (up - down) / (2 * epsilon)
        grads[name] = g
    return grads


def relative_error(analytic, numeric, floor: float) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def grad_check(config: ModelConfig | None = None, tolerance: float = 1e-3, seed: int = 0,
               dtype: str = "float32", batch_size: int = 4, epsilon: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    ``dtype="float32"`` runs the analytic pass in 32-bit arithmetic;
    ``"float64"`` accumulates it in 64-bit. The finite differences are always
    evaluated in float64. Dropout is off (infer-mode graph).
    """
    if dtype not in RELATIVE_FLOOR:
        raise ValueError("dtype must be 'float32' or 'float64'")
    config = config or TINY_CONFIG
    model = init_model(config, seed)
    rng = np.random.default_rng(seed + 1)
    indices = rng.integers(0, config.vocab_size, size=(batch_size, config.max_len))
    labels = rng.integers(0, config.num_classes, size=batch_size)
    _, analytic = network.loss_and_grads(model, indices, labels, mode="infer", dtype=np.dtype(dtype).type)
    numeric = numeric_gradients(model, indices, labels, epsilon)
    errors = {n: relative_error(analytic[n], numeric[n], RELATIVE_FLOOR[dtype]) for n in PARAM_NAMES}
    return GradCheckReport(errors, tolerance, dtype)
