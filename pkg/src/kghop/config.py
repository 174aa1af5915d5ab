"""Declarative run configuration: one YAML file, section per module, CLI
overrides on top. The fully materialized config is echoed into the run
directory before execution so every run is reproducible from its artifacts.
"""

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .encoders import EncoderSpec
from .errors import ConfigError
from .graph import GraphConfig
from .ppo import PPOConfig
from .transe import TransEConfig


@dataclass
class EnvConfig:
    max_out: int = 50
    max_steps: int = 2
    positive_reward: float = 1.0
    negative_reward: float = -1.0
    equal_min_step: int = 0
    step_penalty: float = 0.0


@dataclass
class AgentConfig:
    h1: int = 512
    h2: int = 512
    dtype: str = "float32"

    def numpy_dtype(self):
        try:
            return np.dtype(self.dtype)
        except TypeError as exc:
            raise ConfigError(f"unknown dtype {self.dtype!r}") from exc


@dataclass
class EvalConfig:
    ks: tuple = (1, 3, 5, 10, 25)
    width: int = 0  # 0: use max(ks)
    seed: int = 1234


@dataclass
class RunConfig:
    seed: int = 0
    run_dir: str = "runs/run"
    graph: GraphConfig = field(default_factory=GraphConfig)
    transe: TransEConfig = field(default_factory=TransEConfig)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _section_types():
    return {f.name: f.default_factory for f in dataclasses.fields(RunConfig)
            if f.default_factory is not dataclasses.MISSING}


def _apply(obj, values, path):
    known = {f.name for f in dataclasses.fields(obj)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {path}.{key}")
        current = getattr(obj, key)
        if isinstance(current, tuple) and isinstance(value, list):
            value = tuple(value)
        setattr(obj, key, value)
    return obj


def load_config(path=None):
    """Build a RunConfig from defaults plus an optional YAML file."""
    cfg = RunConfig()
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    sections = _section_types()
    for key, value in raw.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: section {key!r} must be a mapping")
            _apply(getattr(cfg, key), value, key)
        elif key in ("seed", "run_dir"):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"{path}: unknown top-level key {key!r}")
    return cfg


def config_to_dict(cfg):
    out = {"seed": cfg.seed, "run_dir": cfg.run_dir}
    for name in _section_types():
        section = dataclasses.asdict(getattr(cfg, name))
        for k, v in list(section.items()):
            if isinstance(v, tuple):
                section[k] = list(v)
        out[name] = section
    return out


def echo_config(cfg, run_dir):
    """Write the materialized config into the run directory."""
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, "config.yaml")
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
    return path
