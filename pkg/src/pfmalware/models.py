"""Model selectors shared by the command line and the evaluation harness."""
from __future__ import annotations

from pathlib import Path

from .baselines.pipelines import BASELINES, MODEL_FILE as BASELINE_FILE
from .baselines.pipelines import load_baseline, make_baseline, save_baseline
from .exceptions import BadConfig
from .neural.estimator import MODEL_FILE as CRNN_FILE
from .neural.estimator import CrnnClassifier

MODEL_NAMES = ("crnn",) + BASELINES


def make_model(name: str, random_state: int = 0, **params):
    """Unfitted estimator for a selector name. CRNN parameters are plain
    keywords (``epochs=30``); baseline ones use pipeline step prefixes."""
    if name == "crnn":
        return CrnnClassifier(random_state=random_state, **params)
    if name in BASELINES:
        return make_baseline(name, random_state, **params)
    raise BadConfig(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


def save_estimator(estimator, directory) -> Path:
    if isinstance(estimator, CrnnClassifier):
        return estimator.save(directory)
    return save_baseline(estimator, directory)


def load_estimator(directory):
    d = Path(directory)
    if (d / CRNN_FILE).exists():
        return CrnnClassifier.load(d)
    if (d / BASELINE_FILE).exists():
        return load_baseline(d)
    raise FileNotFoundError(f"no saved model in {d}")
