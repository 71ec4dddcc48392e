"""Run configuration files (TOML or JSON) with ``[data]``, ``[model]``, ``[train]`` and ``[eval]`` sections."""

from __future__ import annotations

import json
import sys
from dataclasses import fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ModelConfig
from .train import TrainConfig

DATA_DEFAULTS = {"index": None, "skeleton": "openpose18", "streams": ["joint", "acceleration", "bone"]}
EVAL_DEFAULTS = {"gallery": None, "probe": None, "train_order": "sort", "test_order": "sort", "out_dir": None}
SECTIONS = ("data", "model", "train", "eval")


class ConfigFileError(ValueError):
    pass


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigFileError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigFileError(f"{path}: {exc}") from exc
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigFileError(f"{path}: unknown sections {sorted(unknown)}")
    return doc


def _known(cls, section: dict, name: str) -> dict:
    allowed = {f.name for f in fields(cls) if f.init}
    bad = set(section) - allowed
    if bad:
        raise ConfigFileError(f"[{name}] has unknown keys {sorted(bad)}")
    return dict(section)


def resolve_config(doc: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, file values and explicit overrides (``{"train": {...}, ...}``), in that order."""
    doc = doc or {}
    overrides = overrides or {}
    merged = {}
    for name in SECTIONS:
        section = dict(doc.get(name, {}))
        section.update({k: v for k, v in overrides.get(name, {}).items() if v is not None})
        merged[name] = section
    model_kw = _known(ModelConfig, merged["model"], "model")
    if "blocks" in model_kw:
        model_kw["blocks"] = tuple(tuple(b) for b in model_kw["blocks"])
    train_kw = _known(TrainConfig, merged["train"], "train")
    if "resample_periods" in train_kw:
        train_kw["resample_periods"] = tuple(train_kw["resample_periods"])
    data = {**DATA_DEFAULTS, **merged["data"]}
    evaluation = {**EVAL_DEFAULTS, **merged["eval"]}
    return {"data": data, "model": ModelConfig(**model_kw), "train": TrainConfig(**train_kw), "eval": evaluation}


def config_to_json(resolved: dict) -> dict:
    return {"data": resolved["data"], "model": resolved["model"].to_json(),
            "train": resolved["train"].to_json(), "eval": resolved["eval"]}
