"""Versioned JSON experiment configuration."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..objectives import KINDS

SCHEMA_VERSION = 1
ENVIRONMENTS = ("piecewise", "drifting")
LEARNERS = ("metacurl", "greedy-mdcurl-single", "random-policy")
COMPARATORS = ("per-episode-optimal", "best-fixed", "piecewise-optimal")


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent."""


@dataclass
class ExperimentConfig:
    """Everything a run needs; ``episodes`` is the horizon ``T`` in episodes.

    ``pieces`` is the number of constant-kernel stretches of a piecewise
    environment (so ``pieces - 1`` kernel changes); ``drift_budget`` is the
    requested ``1 + sum_t max ||p^t - p^{t+1}||_1`` of a drifting one.
    ``flip_period`` defaults to the piece length. ``sweep_episodes`` lists the
    horizons used by ``sweep`` for the log-log regret fit.
    """

    num_states: int = 2
    num_actions: int = 2
    horizon: int = 2
    episodes: int = 1000
    environment: str = "piecewise"
    pieces: int = 1
    drift_budget: float = 1.0
    noise_concentration: float = 0.3
    objective: str = "sign-flipping-linear"
    flip_period: int | None = None
    target_budget: float = 1.0
    learner: str = "metacurl"
    grid: list[float] | None = None
    single_rate: float | None = None
    share_kernel: bool = False
    comparator: str = "piecewise-optimal"
    seeds: list[int] = field(default_factory=lambda: [0])
    sweep_episodes: list[int] = field(default_factory=list)
    output: str = "runs"
    confidence: float = 0.05
    workers: int = 1
    plots: bool = False
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("num_states", "num_actions", "horizon", "pieces", "workers"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.episodes, int) or self.episodes < 2:
            raise ConfigError(f"episodes must be an integer >= 2, got {self.episodes!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {self.schema_version!r} is not supported (expected {SCHEMA_VERSION})")
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"environment must be one of {ENVIRONMENTS}, got {self.environment!r}")
        if self.objective not in KINDS:
            raise ConfigError(f"objective must be one of {KINDS}, got {self.objective!r}")
        if self.learner not in LEARNERS:
            raise ConfigError(f"learner must be one of {LEARNERS}, got {self.learner!r}")
        if self.comparator not in COMPARATORS:
            raise ConfigError(f"comparator must be one of {COMPARATORS}, got {self.comparator!r}")
        if self.pieces > self.episodes:
            raise ConfigError("more pieces than episodes")
        for name in ("drift_budget", "target_budget"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 1:
                raise ConfigError(f"{name} is a variation measure and must be >= 1, got {value!r}")
        if not self.noise_concentration > 0:
            raise ConfigError("noise_concentration must be positive")
        if self.flip_period is not None and (not isinstance(self.flip_period, int) or self.flip_period < 1):
            raise ConfigError("flip_period must be a positive integer")
        if self.grid is not None and (not self.grid or any(not (r >= 0) for r in self.grid)):
            raise ConfigError("grid must be a non-empty list of nonnegative learning rates")
        if self.single_rate is not None and not self.single_rate >= 0:
            raise ConfigError("single_rate must be nonnegative")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of nonnegative integers")
        if any(not isinstance(T, int) or T < 2 for T in self.sweep_episodes):
            raise ConfigError("sweep_episodes entries must be integers >= 2")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie in (0, 1)")

    @property
    def piece_length(self) -> int:
        return self.episodes // self.pieces

    @property
    def period(self) -> int:
        return self.flip_period if self.flip_period is not None else max(self.piece_length, 1)

    def with_episodes(self, T: int) -> "ExperimentConfig":
        return replace(self, episodes=T)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "schema_version" not in data:
            raise ConfigError("config is missing schema_version")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_json(text)
