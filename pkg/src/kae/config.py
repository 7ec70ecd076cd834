"""Experiment configuration and its flat ``key = value`` file format.

Grammar, one setting per line::

    # comment
    dataset = mnist
    models = ae, kae:2, kae:3       # comma-separated lists
    lr_grid = 1e-4, 1e-5
    seeds = 2024..2033               # inclusive ranges are allowed for seeds

Blank lines and ``#`` comments are ignored; unknown keys are errors.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .metrics import TASKS
from .model import FAMILIES

__all__ = ["ExperimentConfig", "ModelSpec", "ConfigError", "parse_config_text", "load_config", "parse_seeds"]

DEFAULT_SEEDS = tuple(range(2024, 2034))
SELECTION_MODES = ("task", "reconstruction")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """A family plus its order, written ``kae:3`` (order only for ``kae``)."""

    family: str
    order_p: int | None = None

    @classmethod
    def parse(cls, token: str) -> "ModelSpec":
        token = token.strip().lower()
        fam, _, order = token.partition(":")
        if fam not in FAMILIES:
            raise ConfigError(f"unknown model family {fam!r}; expected one of {sorted(FAMILIES)}")
        if fam == "kae":
            try:
                return cls("kae", int(order) if order else 3)
            except ValueError:
                raise ConfigError(f"bad polynomial order in {token!r}") from None
        if order:
            raise ConfigError(f"only kae takes an order, got {token!r}")
        return cls(fam)

    @property
    def token(self) -> str:
        return f"{self.family}:{self.order_p}" if self.order_p is not None else self.family

    @property
    def label(self) -> str:
        return f"{self.family}-p{self.order_p}" if self.order_p is not None else self.family


def parse_seeds(text: str) -> tuple:
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return tuple(seeds)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "mnist"
    models: tuple = (ModelSpec("ae"), ModelSpec("kae", 1), ModelSpec("kae", 2), ModelSpec("kae", 3))
    d_latent: int = 16
    epochs: int = 10
    batch_size: int = 256
    lr_grid: tuple = (1e-4, 1e-5)
    wd_grid: tuple = (1e-4, 1e-5)
    seeds: tuple = DEFAULT_SEEDS
    tasks: tuple = TASKS
    selection_metric: str = "task"
    data_dir: str | None = None
    out_dir: str = "runs"
    workers: int = 1
    n_train: int = 0
    n_test: int = 0
    retrieval_subset: int = 1000
    recall_k: int = 10
    recall_ns: tuple = tuple(range(10, 101, 10))
    latent_sigmoid: bool = False
    poly_init: str = "linear"
    clip_noise: bool = False
    gaussian_sigma: float = 0.1
    saltpepper_prob: float = 0.05
    spot_checks: int = 3

    def __post_init__(self):
        if not self.lr_grid or not self.wd_grid:
            raise ConfigError("lr_grid and wd_grid must be nonempty")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        if not self.models:
            raise ConfigError("at least one model is required")
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"unknown task {t!r}; expected a subset of {TASKS}")
        if self.selection_metric not in SELECTION_MODES:
            raise ConfigError(f"selection_metric must be one of {SELECTION_MODES}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def resolved_data_dir(self) -> Path:
        if self.data_dir:
            return Path(self.data_dir)
        env = os.environ.get("KAE_DATA_DIR")
        if not env:
            raise ConfigError("no data_dir in config and KAE_DATA_DIR is not set")
        return Path(env)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _coerce(name: str, raw: str):
    kind = {f.name: f for f in fields(ExperimentConfig)}[name]
    default = kind.default
    raw = raw.strip()
    if name == "models":
        return tuple(ModelSpec.parse(t) for t in raw.split(",") if t.strip())
    if name == "seeds":
        return parse_seeds(raw)
    if name == "tasks":
        return tuple(t.strip() for t in raw.split(",") if t.strip())
    if name in ("lr_grid", "wd_grid"):
        return tuple(float(t) for t in raw.split(",") if t.strip())
    if name == "recall_ns":
        return tuple(int(t) for t in raw.split(",") if t.strip())
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw or None


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))
