"""Malware family classification from Windows Prefetch loaded-file lists."""

__version__ = "0.1.0"

from .corpus import Dataset, LabeledSample, SynthConfig, assemble, stratified_folds, synthesize
from .encoder import SequenceEncoder, Vocabulary, build_vocabulary
from .exceptions import PfMalwareError
from .models import MODEL_NAMES, load_estimator, make_model, save_estimator
from .prefetch import PrefetchArtifact, emit_fixture, extract_token_sequence, parse_listing, parse_prefetch

__all__ = [
    "MODEL_NAMES", "Dataset", "LabeledSample", "PfMalwareError", "PrefetchArtifact", "SequenceEncoder",
    "SynthConfig", "Vocabulary", "assemble", "build_vocabulary", "emit_fixture", "extract_token_sequence",
    "load_estimator", "make_model", "parse_listing", "parse_prefetch", "save_estimator",
    "stratified_folds", "synthesize",
]
