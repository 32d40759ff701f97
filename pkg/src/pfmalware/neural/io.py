"""Save and load :class:`CrnnModel` in the ``PFC1`` container."""
from __future__ import annotations

import dataclasses

from .. import container
from .network import PARAM_NAMES, CrnnModel, ModelConfig

MAGIC = b"PFC1"


def _config_entries(config: ModelConfig) -> dict:
    return {f"model.{f.name}": getattr(config, f.name) for f in dataclasses.fields(config)}


def _config_from_entries(entries: dict) -> ModelConfig:
    kwargs = {}
    for f in dataclasses.fields(ModelConfig):
        raw = entries.get(f"model.{f.name}")
        if raw is None:
            continue
        kwargs[f.name] = {"int": int, "float": float}.get(f.type, str)(raw)
    return ModelConfig(**kwargs)


def save_model(model: CrnnModel, path, vocab_hash: str = "", extra: dict | None = None) -> None:
    """Write ``model``; ``extra`` key/value pairs ride along in the config block."""
    entries = _config_entries(model.config)
    entries["vocab_hash"] = vocab_hash
    entries.update(extra or {})
    container.write(path, MAGIC, entries, {n: model.params[n] for n in PARAM_NAMES})


def load_model(path, with_config: bool = False):
    entries, blocks = container.read(path, MAGIC)
    config = _config_from_entries(entries)
    container.check_shapes(blocks, config.param_shapes())
    model = CrnnModel(config, {n: blocks[n] for n in PARAM_NAMES})
    return (model, entries) if with_config else model
