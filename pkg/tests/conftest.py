import numpy as np
import pytest

from pfmalware.corpus import SynthConfig, synthesize
from pfmalware.neural import CrnnClassifier
from pfmalware.prefetch import MAX_NAME_UNITS, PrefetchArtifact

PATH_CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-.~ äöüßéñ漢字Ω"


def _text(rng, lo, hi):
    n = int(rng.integers(lo, hi + 1))
    return "".join(rng.choice(list(PATH_CHARS), n))


def random_artifact(rng, n_files=None) -> PrefetchArtifact:
    n = int(rng.integers(0, 40)) if n_files is None else n_files
    files = []
    for _ in range(n):
        prefix = rng.choice(["\\VOLUME{01d2a3b4c5d6e7f8-1a2b3c4d}", "\\DEVICE\\HARDDISKVOLUME2", ""])
        files.append(f"{prefix}\\{_text(rng, 1, 12)}\\{_text(rng, 1, 20)}.DLL")
    return PrefetchArtifact(
        executable_name=_text(rng, 1, MAX_NAME_UNITS),
        prefetch_hash=int(rng.integers(0, 2**32)),
        run_count=int(rng.integers(0, 2**32)),
        last_run_time=int(rng.integers(0, 2**63)),
        volume_count=int(rng.integers(0, 8)),
        loaded_files=tuple(files),
    )


@pytest.fixture
def artifact_factory():
    return random_artifact


@pytest.fixture(scope="session")
def small_dataset():
    return synthesize(SynthConfig(n_families=4, samples_per_family=15, vocab_size=120,
                                  min_length=12, max_length=30, signature_tokens=10), seed=3)


def tiny_crnn(**overrides):
    """A CRNN small enough to train in well under a second."""
    params = dict(max_len=32, embed_dim=8, conv_filters=6, lstm_units=5, epochs=3,
                  learning_rate=0.1, batch_size=16)
    params.update(overrides)
    return CrnnClassifier(**params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
