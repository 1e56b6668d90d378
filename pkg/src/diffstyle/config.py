"""Run configuration: one flat ``key = value`` namespace over all component configs.

Precedence, highest first: CLI overrides, ``DIFFSTYLE_<KEY>`` environment
variables, the config file, built-in defaults.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .denoiser import PRESETS, DenoiserConfig

ENV_PREFIX = "DIFFSTYLE_"


@dataclass(frozen=True)
class ScheduleConfig:
    diffusion_steps: int = 2000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 0.0
    warmup_steps: int = 500
    max_steps: int = 10000
    clip_norm: float = 1.0
    seed: int = 0
    checkpoint_interval: int = 1000
    valid_interval: int = 500

    def __post_init__(self):
        if self.batch_size < 1 or self.lr < 0 or self.weight_decay < 0 or self.warmup_steps < 0:
            raise ValueError("batch_size must be >= 1 and lr, weight_decay, warmup_steps >= 0")
        if self.max_steps < 0 or self.clip_norm <= 0:
            raise ValueError("max_steps must be >= 0 and clip_norm > 0")
        if self.checkpoint_interval < 1 or self.valid_interval < 1:
            raise ValueError("checkpoint_interval and valid_interval must be >= 1")


@dataclass(frozen=True)
class SampleConfig:
    clamp: bool = False
    sample_stride: int = 1


@dataclass(frozen=True)
class RunConfig:
    profile: str = "desk"
    mode: str = "multitask"
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)

    def to_flat(self) -> dict:
        flat = {"profile": self.profile, "mode": self.mode}
        for part in (self.model, self.schedule, self.train, self.sample):
            flat.update(asdict(part))
        return flat

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for k, v in self.to_flat().items():
                f.write(f"{k} = {v}\n")


_SECTIONS = {
    "model": DenoiserConfig,
    "schedule": ScheduleConfig,
    "train": TrainConfig,
    "sample": SampleConfig,
}


def _coerce(value: str, typ):
    if typ is bool or typ == "bool":
        v = str(value).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ is int or typ == "int":
        return int(value)
    if typ is float or typ == "float":
        return float(value)
    return str(value).strip()


def known_keys() -> list[str]:
    keys = ["profile", "mode"]
    for cls in _SECTIONS.values():
        keys.extend(f.name for f in fields(cls))
    return keys


def read_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[run]\n" + path.read_text(encoding="utf-8"))
    return dict(parser["run"])


def build_config(file_values: dict | None = None, overrides: dict | None = None, env=None) -> RunConfig:
    env = os.environ if env is None else env
    values: dict = {}
    values.update(file_values or {})
    for key in known_keys():
        if ENV_PREFIX + key.upper() in env:
            values[key] = env[ENV_PREFIX + key.upper()]
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = set(values) - set(known_keys())
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")

    profile = str(values.get("profile", "desk")).strip()
    if profile not in PRESETS:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PRESETS)}")
    parts = {"model": PRESETS[profile], "schedule": ScheduleConfig(), "train": TrainConfig(), "sample": SampleConfig()}
    for section, cls in _SECTIONS.items():
        kw = {f.name: _coerce(values[f.name], f.type) for f in fields(cls) if f.name in values}
        if kw:
            parts[section] = replace(parts[section], **kw)
    return RunConfig(profile=profile, mode=str(values.get("mode", "multitask")).strip(), **parts)


def load_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    return build_config(read_config_file(path) if path else None, overrides, env)
