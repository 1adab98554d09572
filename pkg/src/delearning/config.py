"""Run configuration: one JSON document, every field defaulted.

Schema (all keys optional)::

    {
      "seed": 0,
      "out": "runs/default",
      "data": {"csv": null, "label_column": "outcome", "id_column": null,
               "n": 20000, "class_balance": 0.3, "noise": 0.2, "synth_seed": null},
      "split": {"test_fraction": 0.5, "stack_fraction": 0.5},
      "sae": {"sizes": [10, 20, 30], "keep": 2, "rho": 0.05, "beta": 1.0, "epochs": 200,
              "learning_rate": 0.5, "momentum": 0.5, "batch_size": 100, "init_std": 0.1,
              "rho_sweep": [], "rho_sweep_hidden": 20},
      "zoo": {ZooConfig fields except seed and spaces},
      "dbn": {DbnConfig fields except seed},
      "meta": {TrainConfig fields except seed},
      "optimizing": {"resample_mode": "balance", "validation_fraction": 0.25,
                     "candidates": [[1, 1], [2, 1], ...]},
      "baselines": {"enabled": true, "n_estimators": 50, "boosting_rounds": 50, "min_leaf": 2}
    }

Seeds inside nested sections are not read: every random stream is derived
from the root ``seed`` (see :func:`delearning.pipeline.stage_seed`).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .costopt import CostMatrix, default_cost_candidates
from .neural import TrainConfig
from .stacking import DbnConfig, META_TRAIN
from .zoo import ALGORITHMS, MLP_HIDDEN, ZooConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    csv: Optional[str] = None
    label_column: str = "outcome"
    id_column: Optional[str] = None
    n: int = 20000
    class_balance: float = 0.3
    noise: float = 0.2
    synth_seed: Optional[int] = None

    def __post_init__(self):
        if self.csv is None and self.n < 4:
            raise ConfigError("synthetic n must be >= 4")


@dataclass(frozen=True)
class SplitSection:
    test_fraction: float = 0.5
    stack_fraction: float = 0.5

    def __post_init__(self):
        for name in ("test_fraction", "stack_fraction"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"split.{name} must be in (0, 1)")


@dataclass(frozen=True)
class SaeSection:
    sizes: tuple = (10, 20, 30)
    keep: int = 2
    rho: float = 0.05
    beta: float = 1.0
    epochs: int = 200
    learning_rate: float = 0.5
    momentum: float = 0.5
    batch_size: int = 100
    init_std: float = 0.1
    rho_sweep: tuple = ()
    rho_sweep_hidden: int = 20

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(h) for h in self.sizes))
        object.__setattr__(self, "rho_sweep", tuple(float(r) for r in self.rho_sweep))
        if len(set(self.sizes)) != len(self.sizes) or not self.sizes:
            raise ConfigError("sae.sizes must be distinct and nonempty")
        if not 0 <= self.keep <= len(self.sizes):
            raise ConfigError("sae.keep must be between 0 and len(sae.sizes)")
        if not 0.0 < self.rho < 1.0 or any(not 0.0 < r < 1.0 for r in self.rho_sweep):
            raise ConfigError("sparsity targets must be in (0, 1)")


@dataclass(frozen=True)
class OptimizingSection:
    resample_mode: str = "balance"
    validation_fraction: float = 0.25
    candidates: tuple = tuple((c.h_ad, c.h_ndc) for c in default_cost_candidates())

    def __post_init__(self):
        if self.resample_mode not in ("balance", "cost"):
            raise ConfigError("optimizing.resample_mode must be 'balance' or 'cost'")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("optimizing.validation_fraction must be in (0, 1)")
        cands = tuple((float(a), float(b)) for a, b in self.candidates)
        if not cands:
            raise ConfigError("optimizing.candidates must be nonempty")
        try:
            [CostMatrix(a, b) for a, b in cands]
        except ValueError as exc:
            raise ConfigError(f"optimizing.candidates: {exc}") from None
        object.__setattr__(self, "candidates", cands)

    def cost_matrices(self) -> list:
        return [CostMatrix(a, b) for a, b in self.candidates]


@dataclass(frozen=True)
class BaselineSection:
    enabled: bool = True
    n_estimators: int = 50
    boosting_rounds: int = 50
    min_leaf: int = 2


def _zoo_default() -> ZooConfig:
    return ZooConfig()


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    data: DataSection = field(default_factory=DataSection)
    split: SplitSection = field(default_factory=SplitSection)
    sae: SaeSection = field(default_factory=SaeSection)
    zoo: ZooConfig = field(default_factory=_zoo_default)
    dbn: DbnConfig = field(default_factory=DbnConfig)
    meta: TrainConfig = META_TRAIN
    optimizing: OptimizingSection = field(default_factory=OptimizingSection)
    baselines: BaselineSection = field(default_factory=BaselineSection)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "out": self.out}
        for name in _SECTIONS:
            sec = getattr(self, name)
            d = {}
            for f in fields(sec):
                if f.name in _IGNORED.get(name, ()):
                    continue
                v = getattr(sec, f.name)
                d[f.name] = _plain(v)
            out[name] = d
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"seed", "out", *_SECTIONS}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = {}
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        if "out" in d:
            kw["out"] = str(d["out"])
        for name, typ in _SECTIONS.items():
            if name not in d:
                continue
            sec = d[name]
            if not isinstance(sec, dict):
                raise ConfigError(f"config section {name!r} must be an object")
            allowed = {f.name for f in fields(typ)} - set(_IGNORED.get(name, ()))
            bad = set(sec) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            sec = dict(sec)
            for key in ("sizes", "rho_sweep", "candidates", "algorithms", "hidden_size_candidates"):
                if key in sec:
                    sec[key] = tuple(tuple(x) if isinstance(x, list) else x for x in sec[key])
            try:
                kw[name] = typ(**sec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config section {name!r}: {exc}") from None
        return cls(**kw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


_SECTIONS = {
    "data": DataSection,
    "split": SplitSection,
    "sae": SaeSection,
    "zoo": ZooConfig,
    "dbn": DbnConfig,
    "meta": TrainConfig,
    "optimizing": OptimizingSection,
    "baselines": BaselineSection,
}
_IGNORED = {"zoo": ("seed", "spaces"), "dbn": ("seed",), "meta": ("seed",)}


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(raw)


def synth_default(seed: int = 0) -> RunConfig:
    """Full-size synthetic regime: 23165 rows, 11500 held-out rows, sparsity sweep on."""
    return RunConfig(
        seed=seed,
        data=DataSection(n=23165),
        split=SplitSection(test_fraction=11500 / 23165),
        sae=SaeSection(rho_sweep=(0.01, 0.05, 0.1, 0.15)),
    )


__all__ = ["ALGORITHMS", "MLP_HIDDEN", "BaselineSection", "ConfigError", "DataSection", "OptimizingSection",
           "RunConfig", "SaeSection", "SplitSection", "load_config", "synth_default"]
