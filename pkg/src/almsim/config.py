"""Run configuration: defaults, YAML loading, overrides, and hashing.

Every numeric constant the pipeline uses is reachable from
:class:`RunConfig`; a YAML file overrides defaults field by field, and
``--set section.key=value`` command-line overrides beat the file.  The
canonical JSON serialization of the resolved config is hashed to name the
run directory, so identical configurations share artifacts.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import yaml

from .balance_sheet import FrictionParams
from .scenarios import EquityParams
from .termstructure import STANDARD_MATURITIES

__all__ = [
    "ConfigError",
    "SimulationConfig",
    "LiabilityConfig",
    "LegacyConfig",
    "PolicyConfig",
    "ObjectiveConfig",
    "OptimizerSettings",
    "ScenarioCounts",
    "DataConfig",
    "RunConfig",
    "load_config",
    "config_hash",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class SimulationConfig:
    n_months: int = 120
    n_factors: int = 3
    trading_days_per_month: int = 22
    anchor_date: str = "2007-12-31"
    pca_window_years: float = 8.0
    maturities: tuple[int, ...] = STANDARD_MATURITIES


@dataclass(frozen=True)
class LiabilityConfig:
    a: float = 1.5
    b: float = 2.5
    face: float = 100.0


@dataclass(frozen=True)
class LegacyConfig:
    mode: str = "replay"  # "replay" or "cash"
    monthly_budget: float = 15.0
    fixed_income_target: float = 0.65
    fixed_income_tolerance: float = 0.10
    equity_share: float = 0.10
    total_assets: float = 100.0


@dataclass(frozen=True)
class PolicyConfig:
    hidden_width: int = 15
    init_scale: float = 0.01
    init_seed: int = 7
    # "benchmark" seeds the output biases with a benchmark rollout so every
    # action head starts alive and right-sized; "zero" keeps plain biases.
    warm_start: str = "benchmark"


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "iso_elastic"
    gamma: float = 1.0
    epsilon: float = 1e-4
    target_return: float = 0.02
    horizon: int = 120


@dataclass(frozen=True)
class OptimizerSettings:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 10.0
    shuffle_seed: int = 0


@dataclass(frozen=True)
class ScenarioCounts:
    train_seed: int = 2001
    validation_seed: int = 2002
    train_count: int = 10000
    validation_count: int = 10000


@dataclass(frozen=True)
class DataConfig:
    params_csv: str = "builtin"  # "builtin" selects the bundled fixture
    units: str = "auto"
    output_dir: str = "runs"
    histogram_bins: int = 40


@dataclass(frozen=True)
class RunConfig:
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    liabilities: LiabilityConfig = field(default_factory=LiabilityConfig)
    equity: EquityParams = field(default_factory=EquityParams)
    frictions: FrictionParams = field(default_factory=FrictionParams)
    legacy: LegacyConfig = field(default_factory=LegacyConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    scenarios: ScenarioCounts = field(default_factory=ScenarioCounts)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> "RunConfig":
        sim = self.simulation
        if sim.n_months < 1:
            raise ConfigError("simulation.n_months must be positive")
        if not 1 <= sim.n_factors <= sim.n_months:
            raise ConfigError("simulation.n_factors out of range")
        if any(m < 1 or m > sim.n_months for m in sim.maturities):
            raise ConfigError("bond maturities must lie within the monthly grid")
        if len(set(sim.maturities)) != len(sim.maturities):
            raise ConfigError("bond maturities must be distinct")
        try:
            dt.date.fromisoformat(sim.anchor_date)
        except ValueError as exc:
            raise ConfigError(f"bad anchor date: {exc}") from None
        if self.legacy.mode not in ("replay", "cash"):
            raise ConfigError("legacy.mode must be 'replay' or 'cash'")
        if not 0.0 <= self.legacy.equity_share < 1.0:
            raise ConfigError("legacy.equity_share must lie in [0, 1)")
        if self.objective.horizon > sim.n_months:
            raise ConfigError("objective.horizon cannot exceed simulation.n_months")
        if self.scenarios.train_seed == self.scenarios.validation_seed:
            raise ConfigError(
                "training and validation seeds coincide; held-out scenarios "
                "must come from a different substream"
            )
        if min(self.scenarios.train_seed, self.scenarios.validation_seed) < 0:
            raise ConfigError("scenario seeds must be non-negative")
        if min(self.scenarios.train_count, self.scenarios.validation_count) < 1:
            raise ConfigError("scenario counts must be positive")
        if self.data.units not in ("auto", "percent", "decimal"):
            raise ConfigError("data.units must be auto, percent, or decimal")
        if self.data.histogram_bins < 1:
            raise ConfigError("data.histogram_bins must be positive")
        if self.policy.hidden_width < 1:
            raise ConfigError("policy.hidden_width must be positive")
        if self.policy.warm_start not in ("benchmark", "zero"):
            raise ConfigError("policy.warm_start must be 'benchmark' or 'zero'")
        # Constructor checks of the embedded parameter types.
        _ = ObjectiveConfigAdapter(self.objective)
        return self

    @property
    def anchor_date(self) -> dt.date:
        return dt.date.fromisoformat(self.simulation.anchor_date)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def ObjectiveConfigAdapter(obj: ObjectiveConfig):
    """Materialize the runtime ObjectiveSpec (validates on construction)."""
    from .training import ObjectiveSpec

    return ObjectiveSpec(
        kind=obj.kind,
        gamma=obj.gamma,
        epsilon=obj.epsilon,
        target_return=obj.target_return,
        horizon=obj.horizon,
    )


_SECTION_TYPES = {
    "simulation": SimulationConfig,
    "liabilities": LiabilityConfig,
    "equity": EquityParams,
    "frictions": FrictionParams,
    "legacy": LegacyConfig,
    "policy": PolicyConfig,
    "objective": ObjectiveConfig,
    "optimizer": OptimizerSettings,
    "scenarios": ScenarioCounts,
    "data": DataConfig,
}


def _coerce(value: Any, target_type: type) -> Any:
    if target_type is tuple or str(target_type).startswith("tuple"):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(int(v) for v in value)
    if target_type is bool and isinstance(value, str):
        return value.lower() in ("1", "true", "yes", "on")
    if target_type is int:
        number = float(value) if isinstance(value, str) else value
        if isinstance(number, float) and not number.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(number)
    if target_type is float and isinstance(value, str):
        return float(value)
    return target_type(value) if not isinstance(value, target_type) else value


def _build_section(cls: type, values: dict[str, Any], section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"unknown key {section}.{key}")
        default = fields[key].default
        if default is dataclasses.MISSING:
            default = fields[key].default_factory()  # type: ignore[misc]
        target = type(default)
        try:
            kwargs[key] = _coerce(value, target)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from None
    return cls(**kwargs)


def _apply_overrides(tree: dict[str, Any], overrides: list[str]) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, _, raw = item.partition("=")
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts
        value: Any = yaml.safe_load(raw)
        tree.setdefault(section, {})[key] = value


def load_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Resolve defaults <- YAML file <- command-line overrides, then validate."""
    tree: dict[str, Any] = {}
    if path is not None:
        with open(path) as handle:
            loaded = yaml.safe_load(handle) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        tree = loaded
    if overrides:
        _apply_overrides(tree, list(overrides))
    sections = {}
    for name, values in tree.items():
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {name!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        sections[name] = _build_section(_SECTION_TYPES[name], values, name)
    return RunConfig(**sections).validate()


def config_hash(config: RunConfig) -> str:
    """Short stable digest of the resolved configuration."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
