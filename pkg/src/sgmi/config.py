"""Run configuration files: INI sections mapped onto the library configs.

A config file fully determines a run (paths and seed may be overridden on
the command line). Parsing is strict: unknown sections or keys are rejected,
and a normalized snapshot written back out parses to the same settings.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import EvalConfig
from .training import TrainConfig


class ConfigError(RuntimeError):
    """Unreadable, unknown, or invalid configuration input."""


def _parse_c_grid(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad c_grid value: {text!r}") from exc
    if not values:
        raise ConfigError("c_grid must list at least one value")
    return values


@dataclass
class RunSettings:
    data_path: str | None = None
    data_name: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    labeled_fraction: float = 0.2
    val_fraction: float = 0.2
    test_fraction: float = 0.2


# section -> key -> (target object attr-path, converter)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "data": {
        "path": ("data_path", str),
        "name": ("data_name", str),
        "max_degree": ("train.max_degree", int),
    },
    "encoder": {
        "num_layers": ("train.num_layers", int),
        "hidden_dim": ("train.hidden_dim", int),
        "readout": ("train.readout", str),
    },
    "generator": {
        "kind": ("train.generator", str),
        "depth": ("train.tree_depth", int),
        "heads": ("train.heads", int),
    },
    "objective": {
        "estimator": ("train.estimator", str),
        "lam": ("train.lam", float),
    },
    "train": {
        "epochs": ("train.epochs", int),
        "batch_size": ("train.batch_size", int),
        "lr": ("train.lr", float),
        "seed": ("train.seed", int),
        "eval_every": ("train.eval_every", int),
    },
    "eval": {
        "folds": ("eval.folds", int),
        "repetitions": ("eval.repetitions", int),
        "c_grid": ("eval.c_grid", _parse_c_grid),
        "max_iters": ("eval.max_iters", int),
        "tol": ("eval.tol", float),
    },
    "semi": {
        "labeled_fraction": ("labeled_fraction", float),
        "val_fraction": ("val_fraction", float),
        "test_fraction": ("test_fraction", float),
    },
}


def _assign(settings: RunSettings, path: str, value) -> None:
    obj = settings
    parts = path.split(".")
    for part in parts[:-1]:
        obj = getattr(obj, part)
    setattr(obj, parts[-1], value)


def _lookup(settings: RunSettings, path: str):
    obj = settings
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def parse_run_config(path) -> RunSettings:
    """Read, type-check, and validate one run config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    settings = RunSettings()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            target, convert = _SCHEMA[section][key]
            try:
                value = convert(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
            _assign(settings, target, value)
    try:
        settings.train.validate()
        settings.eval.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for name in ("labeled_fraction", "val_fraction", "test_fraction"):
        frac = getattr(settings, name)
        if not 0.0 < frac < 1.0:
            raise ConfigError(f"{name} must be in (0, 1), got {frac}")
    if settings.labeled_fraction + settings.val_fraction + settings.test_fraction >= 1.0:
        raise ConfigError("semi split fractions must sum to less than 1")
    return settings


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def normalize(settings: RunSettings) -> str:
    """Canonical INI snapshot: every known key, in schema order."""
    lines = []
    for section, keys in _SCHEMA.items():
        body = []
        for key, (target, _convert) in keys.items():
            value = _lookup(settings, target)
            if value is None:
                continue
            body.append(f"{key} = {_format_value(value)}")
        if body:
            lines.append(f"[{section}]")
            lines.extend(body)
            lines.append("")
    return "\n".join(lines)


def write_snapshot(settings: RunSettings, path) -> None:
    Path(path).write_text(normalize(settings), encoding="utf-8")
