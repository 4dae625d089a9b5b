"""Experiment configuration: JSON file with a fixed schema, overridable by
command-line flags (flags > config file > defaults).  Unknown keys are
rejected before any work starts.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .errors import ConfigError

RESOLUTIONS = ("hourly", "group", "daily")
MODELS = ("lr", "nlr", "pm")
PRICE_MODES = ("observed", "modeled")
LOSS_MODES = ("literal", "marginal")
OBJECTIVES = ("volume", "cost")

DEFAULT_LAMBDA_GRID = (1e-6, 1e-4, 1e-2, 1.0, 100.0)


@dataclass(frozen=True)
class SynthConfig:
    days: int = 365
    device_seed: Optional[int] = None  # defaults to the experiment seed
    market_seed: Optional[int] = None
    spot_level: float = 100.0
    imbalance_scale: float = 0.02
    balanced_fraction: float = 0.25
    noise: float = 0.3
    gap_rate: float = 0.0
    price_style: str = "modeled"

    def validate(self):
        if self.days < 14:
            raise ConfigError("synth.days must be >= 14")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("synth.noise must be in [0, 1]")
        if not 0.0 <= self.gap_rate < 1.0:
            raise ConfigError("synth.gap_rate must be in [0, 1)")
        if self.price_style not in ("modeled", "perturbed"):
            raise ConfigError(f"unknown synth.price_style {self.price_style!r}")

    def to_json(self) -> dict:
        return {
            "days": self.days,
            "device_seed": self.device_seed,
            "market_seed": self.market_seed,
            "spot_level": self.spot_level,
            "imbalance_scale": self.imbalance_scale,
            "balanced_fraction": self.balanced_fraction,
            "noise": self.noise,
            "gap_rate": self.gap_rate,
            "price_style": self.price_style,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    readings_csv: str = "readings.csv"
    market_csv: str = "market.csv"
    out_dir: str = "out"
    resolution: str = "hourly"
    group_count: int = 3
    groups: Optional[tuple[tuple[int, ...], ...]] = None
    threshold_watts: float = 5.0
    label_operating_hours: bool = False
    train_fraction: float = 0.8
    model: str = "lr"
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    folds: int = 3
    oversample: bool = False
    oversample_ratio: float = 2.0
    tau_list: tuple[int, ...] = tuple(range(1, 25))
    strict: bool = True
    price_mode: str = "observed"
    loss_mode: str = "literal"
    objective: str = "volume"
    psm_averaging: str = "literal"
    threshold_levels: int = 15
    exact_budget: int = 10**6
    seed: int = 1
    jobs: int = 1
    synth: Optional[SynthConfig] = None

    def validate(self) -> "ExperimentConfig":
        if self.resolution not in RESOLUTIONS:
            raise ConfigError(f"unknown resolution {self.resolution!r}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.price_mode not in PRICE_MODES:
            raise ConfigError(f"unknown price_mode {self.price_mode!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss_mode {self.loss_mode!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.psm_averaging not in ("literal", "present_only"):
            raise ConfigError(f"unknown psm_averaging {self.psm_averaging!r}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self.threshold_watts <= 0:
            raise ConfigError("threshold_watts must be positive")
        if not 1 <= self.group_count <= 24:
            raise ConfigError("group_count must be in 1..24")
        if not self.lambda_grid or any(l < 0 for l in self.lambda_grid):
            raise ConfigError("lambda_grid must be non-empty and non-negative")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.oversample_ratio < 1:
            raise ConfigError("oversample_ratio must be >= 1")
        if not self.tau_list or any(not 0 <= t <= 24 for t in self.tau_list):
            raise ConfigError("tau values must be in 0..24")
        if self.threshold_levels < 2:
            raise ConfigError("threshold_levels must be >= 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.synth is not None:
            self.synth.validate()
        return self

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def to_json(self) -> dict:
        return {
            "readings_csv": self.readings_csv,
            "market_csv": self.market_csv,
            "out_dir": self.out_dir,
            "resolution": self.resolution,
            "group_count": self.group_count,
            "groups": [list(g) for g in self.groups] if self.groups else None,
            "threshold_watts": self.threshold_watts,
            "label_operating_hours": self.label_operating_hours,
            "train_fraction": self.train_fraction,
            "model": self.model,
            "lambda_grid": list(self.lambda_grid),
            "folds": self.folds,
            "oversample": self.oversample,
            "oversample_ratio": self.oversample_ratio,
            "tau_list": list(self.tau_list),
            "strict": self.strict,
            "price_mode": self.price_mode,
            "loss_mode": self.loss_mode,
            "objective": self.objective,
            "psm_averaging": self.psm_averaging,
            "threshold_levels": self.threshold_levels,
            "exact_budget": self.exact_budget,
            "seed": self.seed,
            "jobs": self.jobs,
            "synth": self.synth.to_json() if self.synth else None,
        }


def _build(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {context} keys: {', '.join(sorted(unknown))}")
    return data


def parse_config(data: dict) -> ExperimentConfig:
    data = dict(data)
    _build(ExperimentConfig, data, "config")
    if data.get("synth") is not None:
        synth = dict(data["synth"])
        _build(SynthConfig, synth, "synth config")
        data["synth"] = SynthConfig(**synth)
    if data.get("groups") is not None:
        data["groups"] = tuple(tuple(int(h) for h in g) for g in data["groups"])
    for key in ("lambda_grid", "tau_list"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    return ExperimentConfig(**data).validate()


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return parse_config(data)


def apply_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Apply non-None command-line overrides on top of a parsed config."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if "tau" in updates:
        updates["tau_list"] = (int(updates.pop("tau")),)
    if not updates:
        return cfg
    return replace(cfg, **updates).validate()
