"""Experiment configuration files (JSON) and their validation."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import environments as envs
from ..errors import ConfigError

ENV_OVERRIDE_KEYS = {"dt", "episode_len", "action_low", "action_high", "Q_scale", "R_scale", "A", "B"}


@dataclass
class ExperimentConfig:
    """One experiment: environment, algorithm, hyperparameters and seeds.

    ``hyper`` is passed through to the algorithm; unknown hyperparameter
    names are rejected when the algorithm is built, not here.
    """

    env: str = envs.LINEAR_SYSTEM
    env_overrides: dict = field(default_factory=dict)
    algo: str | None = None
    hyper: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    dataset: str | None = None
    tensor: str | None = None
    model: str | None = None
    out: str = "runs"
    steps: int = 50000
    episodes: int = 100
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self, check_files: bool = False) -> None:
        if self.env not in envs.KINDS:
            raise ConfigError(f"unknown environment {self.env!r}; expected one of {envs.KINDS}")
        bad = set(self.env_overrides) - ENV_OVERRIDE_KEYS
        if bad:
            raise ConfigError(f"unknown environment overrides {sorted(bad)}")
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        if any(not isinstance(s, int) or isinstance(s, bool) for s in self.seeds):
            raise ConfigError("seeds must be integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        for name in ("steps", "episodes", "jobs"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if name == "steps" else 1):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if check_files:
            for name in ("dataset", "tensor", "model"):
                path = getattr(self, name)
                if path is not None and not Path(path).is_file():
                    raise ConfigError(f"{name} file {path} does not exist")

    def make_env(self) -> envs.EnvironmentSpec:
        try:
            return envs.make_env(self.env, **self.env_overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid environment settings: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"configuration file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(raw)


def agent_config(hyper: dict):
    """AgentConfig from a hyperparameter mapping, rejecting unknown names."""
    from ..actor_critic import AgentConfig

    names = {f.name for f in dataclasses.fields(AgentConfig)}
    bad = set(hyper) - names
    if bad:
        raise ConfigError(f"unknown actor-critic hyperparameters {sorted(bad)}")
    return AgentConfig(**hyper)
