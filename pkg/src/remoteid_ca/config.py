"""Run configuration: one YAML file per run, flags override fields.

Defaults mirror the production broadcast/scan constants and the training
hyperparameters; all randomness flows from one root seed through named
substreams (placement, shadowing, channel draws, exploration).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .avoidance import AvoidanceConfig
from .dqn import EpsilonSchedule, Hyperparams
from .env import EnvConfig, RewardWeights
from .flight_sim import CANNED_AVOIDANCE
from .interference import LinkBudget
from .timing import TimingConfig

__all__ = ["RunConfig", "ConfigError", "load_config", "config_digest"]


class ConfigError(ValueError):
    """Invalid or unknown configuration content (CLI exit code 2)."""


@dataclass
class RunConfig:
    timing: TimingConfig = field(default_factory=TimingConfig)
    budget: LinkBudget = field(default_factory=LinkBudget)
    env: EnvConfig = field(default_factory=EnvConfig)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    avoidance: AvoidanceConfig = field(default_factory=lambda: CANNED_AVOIDANCE)
    seeds: tuple[int, ...] = (0,)
    rates: tuple[int, ...] = tuple(range(1, 11))
    delay_lo: float = 0.0
    delay_hi: float = 1.0
    dmuca_seeds: int = 20

    def to_dict(self) -> dict:
        return _as_plain(dataclasses.asdict(self))


def _as_plain(obj):
    if isinstance(obj, dict):
        return {k: _as_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    if hasattr(obj, "value"):  # enums
        return obj.value
    return obj


def config_digest(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


_SECTION_TYPES = {
    "timing": TimingConfig,
    "budget": LinkBudget,
    "avoidance": AvoidanceConfig,
}


def _build_section(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field(s) in {path}: {sorted(unknown)}")
    coerced = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read the YAML config (optional) and apply CLI overrides on top."""
    data: dict = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text())
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
        data = raw
    if overrides:
        data = _merge(data, overrides)

    known = {
        "timing", "budget", "env", "hyperparams", "avoidance",
        "seeds", "rates", "delay_lo", "delay_hi", "dmuca_seeds",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level config field(s): {sorted(unknown)}")

    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        if section in data:
            kwargs[section] = _build_section(cls, data[section], section)
    if "env" in data:
        env_data = dict(data["env"])
        if "weights" in env_data:
            env_data["weights"] = _build_section(RewardWeights, env_data["weights"], "env.weights")
        kwargs["env"] = _build_section(EnvConfig, env_data, "env")
    if "hyperparams" in data:
        hp_data = dict(data["hyperparams"])
        if "epsilon" in hp_data:
            hp_data["epsilon"] = _build_section(
                EpsilonSchedule, hp_data["epsilon"], "hyperparams.epsilon"
            )
        kwargs["hyperparams"] = _build_section(Hyperparams, hp_data, "hyperparams")
    for scalar in ("seeds", "rates", "delay_lo", "delay_hi", "dmuca_seeds"):
        if scalar in data:
            value = data[scalar]
            kwargs[scalar] = tuple(value) if isinstance(value, list) else value
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
