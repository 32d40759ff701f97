"""Labeled datasets: assembly, stratified folds, synthetic corpora, year splits."""
from __future__ import annotations

import configparser
import dataclasses
import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import BadConfig, BadK, EmptyDataset


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    tokens: tuple
    family: str
    discovery_year: int | None = None


@dataclass
class Dataset:
    samples: list
    family_index: dict                          # family -> dense class index
    drop_report: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.samples:
            if s.family not in self.family_index:
                raise ValueError(f"sample {s.sample_id} has unindexed family {s.family!r}")
        if sorted(self.family_index.values()) != list(range(len(self.family_index))):
            raise ValueError("class indices must be contiguous from 0")

    def __len__(self):
        return len(self.samples)

    @property
    def families(self) -> list[str]:
        """Family names ordered by class index."""
        return sorted(self.family_index, key=self.family_index.get)

    @property
    def n_classes(self) -> int:
        return len(self.family_index)

    @property
    def sequences(self) -> list[tuple]:
        return [s.tokens for s in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([self.family_index[s.family] for s in self.samples], dtype=np.intp)

    @property
    def years(self) -> list:
        return [s.discovery_year for s in self.samples]

    def family_counts(self) -> dict[str, int]:
        counts = Counter(s.family for s in self.samples)
        return {f: counts.get(f, 0) for f in self.families}

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], dict(self.family_index))


def _index_by_size(counts: Counter) -> dict:
    order = sorted(counts, key=lambda f: (-counts[f], f))
    return {f: i for i, f in enumerate(order)}


def assemble(sequences, truth, min_family_size: int = 1, years=None) -> Dataset:
    """Join token sequences with family labels, keeping families with at least
    ``min_family_size`` samples. Class 0 is the largest family (ties broken
    lexicographically)."""
    if min_family_size < 1:
        raise ValueError("min_family_size must be >= 1")
    years = years or {}
    drops = {}
    kept = []
    for sid in sorted(sequences):
        tokens = tuple(sequences[sid])
        family = truth.get(sid)
        if family is None:
            drops[sid] = "unlabeled"
        elif not tokens:
            drops[sid] = "empty sequence"
        else:
            kept.append(LabeledSample(sid, tokens, family, years.get(sid)))
    for sid in sorted(set(truth) - set(sequences)):
        drops[sid] = "no sequence"

    counts = Counter(s.family for s in kept)
    small = {f for f, c in counts.items() if c < min_family_size}
    for s in kept:
        if s.family in small:
            drops[s.sample_id] = f"family below threshold: {s.family}"
    kept = [s for s in kept if s.family not in small]
    if not kept:
        raise EmptyDataset(f"no family has at least {min_family_size} samples")
    counts = Counter(s.family for s in kept)
    return Dataset(kept, _index_by_size(counts), drops)


# --------------------------------------------------------------------------
# folds

@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    flagged: list = field(default_factory=list)   # classes with fewer than k samples

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def split(self):
        for fold in range(self.k):
            yield np.flatnonzero(self.assignments != fold), np.flatnonzero(self.assignments == fold)


def assign_folds(labels, k: int, seed: int) -> FoldPlan:
    """Shuffle each class, then deal its members round-robin over the folds.

    Dealing continues where the previous class stopped so fold sizes stay
    balanced overall, while every class stays within one sample of even.
    """
    if k < 2:
        raise BadK(f"k must be >= 2, got {k}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    assignments = np.full(len(labels), -1, dtype=np.intp)
    flagged = []
    cursor = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            flagged.append(cls.item())
        members = rng.permutation(members)
        assignments[members] = (cursor + np.arange(len(members))) % k
        cursor = (cursor + len(members)) % k
    if flagged:
        warnings.warn(f"classes {flagged} have fewer than {k} samples; some folds lack them",
                      stacklevel=2)
    return FoldPlan(k, assignments, seed, flagged)


def stratified_folds(dataset: Dataset, k: int = 10, seed: int = 0) -> FoldPlan:
    return assign_folds(dataset.labels, k, seed)


class FamilyStratifiedKFold:
    """Splitter with the scikit-learn ``split``/``get_n_splits`` protocol."""

    def __init__(self, n_splits: int = 10, random_state: int = 0):
        self.n_splits = n_splits
        self.random_state = random_state

    def get_n_splits(self, X=None, y=None, groups=None):
        return self.n_splits

    def split(self, X, y, groups=None):
        yield from assign_folds(y, self.n_splits, self.random_state).split()


# --------------------------------------------------------------------------
# synthetic corpora

@dataclass(frozen=True)
class SynthConfig:
    n_families: int = 5
    samples_per_family: int = 60
    vocab_size: int = 400
    min_length: int = 24
    max_length: int = 64
    signature_tokens: int = 20
    noise_rate: float = 0.2
    # the last ``novel_families`` families are dated ``novel_year``; the rest
    # get years drawn uniformly from [first_year, cutoff_year]
    novel_families: int = 0
    first_year: int = 2010
    cutoff_year: int = 2016
    novel_year: int = 2017

    def validate(self):
        if self.n_families < 1 or self.samples_per_family < 1:
            raise BadConfig("need at least one family and one sample per family")
        if self.signature_tokens < 1:
            raise BadConfig("signature_tokens must be >= 1")
        if not 1 <= self.min_length <= self.max_length:
            raise BadConfig("need 1 <= min_length <= max_length")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise BadConfig("noise_rate must lie in [0, 1]")
        if self.signature_tokens * self.n_families > self.vocab_size:
            raise BadConfig(
                f"{self.n_families} families x {self.signature_tokens} signature tokens exceed "
                f"vocab_size {self.vocab_size}")
        if self.noise_rate > 0 and self.signature_tokens * self.n_families == self.vocab_size:
            raise BadConfig("noise_rate > 0 needs vocabulary left over for the noise pool")
        if not 0 <= self.novel_families <= self.n_families:
            raise BadConfig("novel_families must lie in [0, n_families]")

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        parser = configparser.ConfigParser()
        parser.read_string(Path(path).read_text(encoding="utf-8"))
        section = parser["synthesize"] if parser.has_section("synthesize") else parser.defaults()
        return cls.from_mapping(section)

    @classmethod
    def from_mapping(cls, mapping) -> "SynthConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in mapping:
                kwargs[f.name] = (float if f.type in ("float", float) else int)(mapping[f.name])
        return cls(**kwargs)


def _synthetic_token(i: int) -> str:
    return f"\\WINDOWS\\SYSTEM32\\SYN{i:05d}.DLL"


def synthesize(config: SynthConfig = SynthConfig(), seed: int = 0) -> Dataset:
    """Desk-scale corpus: each family owns ``signature_tokens`` tokens and
    every sample mixes ``round(noise_rate * length)`` tokens from a shared
    noise pool into draws from its family pool."""
    config.validate()
    rng = np.random.default_rng(seed)
    F, s = config.n_families, config.signature_tokens
    pools = [np.arange(f * s, (f + 1) * s) for f in range(F)]
    noise = np.arange(F * s, config.vocab_size)
    width = len(str(F - 1))
    samples = []
    for f in range(F):
        family = f"Family{f:0{width}d}"
        for j in range(config.samples_per_family):
            length = int(rng.integers(config.min_length, config.max_length + 1))
            n_noise = int(round(config.noise_rate * length))
            toks = np.concatenate([rng.choice(pools[f], length - n_noise),
                                   rng.choice(noise, n_noise) if n_noise else np.empty(0, int)])
            rng.shuffle(toks)
            if f >= F - config.novel_families:
                year = config.novel_year
            else:
                year = int(rng.integers(config.first_year, config.cutoff_year + 1))
            samples.append(LabeledSample(f"syn-{f:03d}-{j:05d}",
                                         tuple(_synthetic_token(int(t)) for t in toks),
                                         family, year))
    counts = Counter(s.family for s in samples)
    return Dataset(samples, _index_by_size(counts))


# --------------------------------------------------------------------------
# year split

def split_by_discovery_year(dataset: Dataset, cutoff_year: int) -> tuple[Dataset, Dataset]:
    """``base`` holds samples from years up to ``cutoff_year``; ``novel`` the
    later ones. ``base`` keeps its own size-ordered index; ``novel`` carries the
    merged index, which extends the base index with the novel-only families."""
    missing = [s.sample_id for s in dataset.samples if s.discovery_year is None]
    if missing:
        raise ValueError(f"{len(missing)} samples lack a discovery year, e.g. {missing[0]}")
    base = [s for s in dataset.samples if s.discovery_year <= cutoff_year]
    novel = [s for s in dataset.samples if s.discovery_year > cutoff_year]
    base_index = _index_by_size(Counter(s.family for s in base))
    new_counts = Counter(s.family for s in novel if s.family not in base_index)
    merged = dict(base_index)
    for f in _index_by_size(new_counts):
        merged[f] = len(merged)
    return Dataset(base, base_index), Dataset(novel, merged)


def merge(base: Dataset, novel: Dataset) -> Dataset:
    """Union of a year split, indexed with the merged (novel) family index."""
    return Dataset(base.samples + novel.samples, dict(novel.family_index))


# --------------------------------------------------------------------------
# on-disk format

def save_dataset(dataset: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "samples.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for s in dataset.samples:
            fh.write(json.dumps({"id": s.sample_id, "tokens": list(s.tokens), "family": s.family,
                                 "year": s.discovery_year}, ensure_ascii=False) + "\n")
    counts = dataset.family_counts()
    with open(d / "families.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("family\tclass_index\tcount\n")
        for f in dataset.families:
            fh.write(f"{f}\t{dataset.family_index[f]}\t{counts[f]}\n")
    if dataset.drop_report:
        with open(d / "drops.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("sample_id\treason\n")
            for sid, reason in sorted(dataset.drop_report.items()):
                fh.write(f"{sid}\t{reason}\n")
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    index = {}
    with open(d / "families.tsv", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip():
                family, idx, _ = line.rstrip("\n").split("\t")
                index[family] = int(idx)
    samples = []
    with open(d / "samples.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                samples.append(LabeledSample(obj["id"], tuple(obj["tokens"]), obj["family"], obj.get("year")))
    return Dataset(samples, index)
