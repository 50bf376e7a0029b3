"""Top-level configuration, YAML round-tripping and key overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .dynamics import IntegratorConfig, MissileDragParams
from .env import RewardParams
from .guidance import GuidanceConfig
from .ppo import TrainerConfig
from .scenario import ScenarioConfig


@dataclass(frozen=True)
class BenchConfig:
    episodes: int = 5000
    # 0 picks os.cpu_count()
    workers: int = 0
    checkpoint: str = ""
    thresholds_cm: tuple = (100.0, 200.0, 300.0)


@dataclass(frozen=True)
class Config:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    missile: MissileDragParams = field(default_factory=MissileDragParams)
    reward: RewardParams = field(default_factory=RewardParams)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


class ConfigError(ValueError):
    pass


def _build(cls, data: dict, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path or 'config'}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        where = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where)
        elif isinstance(default, tuple):
            kwargs[name] = tuple(
                float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v for v in value
            )
        elif isinstance(default, bool):
            kwargs[name] = bool(value)
        elif isinstance(default, float):
            kwargs[name] = float(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def from_dict(data: dict) -> Config:
    return _build(Config, data or {})


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    return obj


def to_dict(cfg: Config) -> dict:
    return _plain(cfg)


def dumps(cfg: Config) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> Config:
    return from_dict(yaml.safe_load(text))


def load(path) -> Config:
    return loads(Path(path).read_text())


def default_config_text() -> str:
    return resources.files("losc").joinpath("default_config.yaml").read_text()


def apply_overrides(cfg: Config, overrides) -> Config:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML."""
    data = to_dict(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config section {p!r} in {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return from_dict(data)


def benchmark_config(
    law: str = "pn",
    drag: str = "none",
    target_max_g: float = 30.0,
    radome: bool = True,
    base: Config | None = None,
) -> Config:
    """Evaluation setup: fixed target capability, chosen drag model and law."""
    base = base or Config()
    g = 9.81
    sc = dataclasses.replace(
        base.scenario,
        target_max_accel=(target_max_g * g, target_max_g * g),
        drag_mode=drag,
        radome=dataclasses.replace(base.scenario.radome, enabled=radome),
    )
    return dataclasses.replace(base, scenario=sc, guidance=dataclasses.replace(base.guidance, law=law))
