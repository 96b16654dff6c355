"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment.  Keys are the fields of
:class:`TrainingConfig` plus the experiment keys below.  Unknown and
duplicated keys are errors, as are values that do not parse as the key's type.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .sparsity import SPARSE_KINDS, ScheduleKind
from .search import normalize_tolerance
from .trainer import TrainingConfig

DATASETS = ("mnist", "cifar10")
DEFAULT_ARCHITECTURES = {
    "mnist": "dense:128",
    "cifar10": "conv:6:5,pool,conv:16:5,pool,dense:120,dense:84",
}


class ConfigError(ValueError):
    """Malformed configuration file or override."""


class DataPathError(FileNotFoundError):
    """A configured data path does not exist."""


@dataclass(frozen=True)
class ExperimentConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    dataset: str = "mnist"
    data_dir: str = ""
    subset: int = 0                    # 0 = every training sample
    validation_fraction: float = 0.2
    split_seed: int = 0
    out_dir: str = "runs"
    tolerance: str = "one_percent"
    grid: tuple[float, ...] = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)
    grids: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    search_schedules: tuple[str, ...] = tuple(k.value for k in SPARSE_KINDS)
    workers: int = 1

    def grid_for(self, kind: str) -> tuple[float, ...]:
        return tuple(self.grids.get(kind, self.grid))

    def provenance(self) -> dict:
        return {"dataset": self.dataset, "data_dir": self.data_dir, "subset": self.subset,
                "validation_fraction": self.validation_fraction, "split_seed": self.split_seed}


_EXPERIMENT_KEYS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)
                    if f.name not in ("training", "grids")}
_TRAINING_KEYS = {f.name: f.type for f in dataclasses.fields(TrainingConfig)}
_GRID_KEYS = {f"grid_{k.value}": k.value for k in ScheduleKind}


def _convert(key: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("tuple[float"):
            return tuple(float(v) for v in text.split(",") if v.strip())
        if kind.startswith("tuple[str"):
            return tuple(v.strip() for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.split('[')[0]}") from None
    return text


def _type_name(t) -> str:
    return t if isinstance(t, str) else t.__name__


def read_pairs(path) -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line number)`` pairs from a config file."""
    pairs: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        if key in pairs:
            raise ConfigError(f"{path}: duplicate key {key!r} on lines {pairs[key][1]} and {lineno}")
        pairs[key] = (value, lineno)
    return pairs


def build_config(values: Mapping[str, str], source: str = "<config>") -> ExperimentConfig:
    training, experiment, grids = {}, {}, {}
    for key, raw in values.items():
        if key in _TRAINING_KEYS:
            training[key] = _convert(key, _type_name(_TRAINING_KEYS[key]), raw)
        elif key in _EXPERIMENT_KEYS:
            experiment[key] = _convert(key, _type_name(_EXPERIMENT_KEYS[key]), raw)
        elif key in _GRID_KEYS:
            grids[_GRID_KEYS[key]] = _convert(key, "tuple[float, ...]", raw)
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")
    dataset = experiment.get("dataset", "mnist")
    if dataset not in DATASETS:
        raise ConfigError(f"dataset must be one of {DATASETS}, got {dataset!r}")
    training.setdefault("architecture", DEFAULT_ARCHITECTURES[dataset])
    try:
        if "schedule" in training:
            training["schedule"] = ScheduleKind(training["schedule"]).value
        if "tolerance" in experiment:
            experiment["tolerance"] = normalize_tolerance(experiment["tolerance"])
        for kind in experiment.get("search_schedules", ()):
            ScheduleKind(kind)
        cfg = ExperimentConfig(training=TrainingConfig(**training), grids=grids, **experiment)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if any(s < 0 for g in (cfg.grid, *cfg.grids.values()) for s in g):
        raise ConfigError(f"{source}: grid values must be nonnegative")
    if not 0 <= cfg.validation_fraction < 1:
        raise ConfigError(f"{source}: validation_fraction must lie in [0, 1)")
    if cfg.workers < 1 or cfg.subset < 0:
        raise ConfigError(f"{source}: workers must be >= 1 and subset >= 0")
    return cfg


def parse_config(path=None, overrides: Mapping[str, str] | None = None,
                 check_paths: bool = True) -> ExperimentConfig:
    """Read ``path`` (optional) and apply ``overrides``, which take precedence."""
    values: dict[str, str] = {}
    source = "<overrides>"
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        values = {k: v for k, (v, _) in read_pairs(path).items()}
        source = str(path)
    values.update(overrides or {})
    cfg = build_config(values, source)
    if check_paths and cfg.data_dir and not Path(cfg.data_dir).is_dir():
        raise DataPathError(f"data directory not found: {cfg.data_dir}")
    return cfg
