"""Run-config files: one JSON document describing a whole experiment.

Sections: ``data`` (dataset recipe, all fields required), ``train``
(hyperparameters, all optional with defaults), ``eval`` (retrieval
protocol, optional with defaults), ``paths`` (artifact locations, all
required). ``format_version: 1`` is mandatory. Unknown keys anywhere are
rejected so hyperparameter typos cannot pass silently; every validation
message names the offending field path.

The patch geometry (``patches_per_image``, ``patch_input_dim``) lives in
``data`` only and is injected into the training config, so the two can
never disagree inside one file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .synth import SynthSpec
from .training import TrainConfig

__all__ = ["EvalConfig", "RunPaths", "RunConfig", "load_run_config"]

FORMAT_VERSION = 1

# train-section keys supplied by the data section, not by the user
_INJECTED_TRAIN_KEYS = {"patches_per_image", "patch_input_dim"}


@dataclass
class EvalConfig:
    query_per_identity: int = 3
    k_max: int = 10
    seed: int = 7


@dataclass
class RunPaths:
    dataset: Path
    checkpoint: Path
    log: Path
    metrics: Path


@dataclass
class RunConfig:
    data: SynthSpec
    train: TrainConfig
    eval: EvalConfig
    paths: RunPaths


def _require_section(doc: dict, name: str) -> dict:
    if name not in doc:
        raise ConfigError(f"missing section `{name}`")
    section = doc[name]
    if not isinstance(section, dict):
        raise ConfigError(f"section `{name}` must be an object")
    return section


def _check_type(path: str, value, expected: type):
    # bool is an int subclass; keep the two strictly separate
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"`{path}` must be a number, got {type(value).__name__}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"`{path}` must be an integer, got {type(value).__name__}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"`{path}` must be a boolean, got {type(value).__name__}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"`{path}` must be a string, got {type(value).__name__}")
        return value
    raise AssertionError(f"unhandled config field type {expected}")


def _parse_section(section: dict, section_name: str, cls, *, required_all: bool,
                   skip: set[str] = frozenset()):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    for key in section:
        if key not in fields:
            raise ConfigError(f"unknown key `{section_name}.{key}`")
    kwargs = {}
    for name, f in fields.items():
        path = f"{section_name}.{name}"
        if name in section:
            ftype = {"int": int, "float": float, "bool": bool}.get(f.type, f.type)
            kwargs[name] = _check_type(path, section[name], ftype)
        elif required_all or f.default is dataclasses.MISSING:
            raise ConfigError(f"missing `{path}`")
    return kwargs


def load_run_config(path) -> RunConfig:
    """Parse and validate a run-config file; raises ConfigError on any problem."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")

    known_top = {"format_version", "data", "train", "eval", "paths"}
    for key in doc:
        if key not in known_top:
            raise ConfigError(f"unknown key `{key}`")
    if "format_version" not in doc:
        raise ConfigError("missing `format_version`")
    if doc["format_version"] != FORMAT_VERSION:
        raise ConfigError(
            f"unsupported `format_version` {doc['format_version']!r} (expected {FORMAT_VERSION})")

    data_kwargs = _parse_section(_require_section(doc, "data"), "data",
                                 SynthSpec, required_all=True)
    data = SynthSpec(**data_kwargs)
    try:
        data.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid `data` section: {exc}") from exc

    train_kwargs = _parse_section(doc.get("train", {}), "train", TrainConfig,
                                  required_all=False, skip=_INJECTED_TRAIN_KEYS)
    train = TrainConfig(patches_per_image=data.patches_per_image,
                        patch_input_dim=data.patch_input_dim, **train_kwargs)
    try:
        train.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid `train` section: {exc}") from exc

    eval_kwargs = _parse_section(doc.get("eval", {}), "eval", EvalConfig,
                                 required_all=False)
    eval_cfg = EvalConfig(**eval_kwargs)
    if eval_cfg.query_per_identity < 1:
        raise ConfigError("`eval.query_per_identity` must be >= 1")
    if eval_cfg.k_max < 1:
        raise ConfigError("`eval.k_max` must be >= 1")

    paths_section = _require_section(doc, "paths")
    known_paths = {"dataset", "checkpoint", "log", "metrics"}
    for key in paths_section:
        if key not in known_paths:
            raise ConfigError(f"unknown key `paths.{key}`")
    kwargs = {}
    for name in known_paths:
        if name not in paths_section:
            raise ConfigError(f"missing `paths.{name}`")
        kwargs[name] = Path(_check_type(f"paths.{name}", paths_section[name], str))
    paths = RunPaths(**kwargs)

    return RunConfig(data=data, train=train, eval=eval_cfg, paths=paths)
