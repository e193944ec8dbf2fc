"""Experiment driver: configs, synthetic environments, oracle comparators, runs and the CLI."""
from __future__ import annotations

from .config import ConfigError, ExperimentConfig, load_config
from .environments import Environment, generate_environment
from .comparators import ComparatorResult, dp_optimal_policy, frank_wolfe, oracle_comparators
from .runner import RegretTrace, RunResult, run_experiment, run_sweep

__all__ = [
    "ComparatorResult", "ConfigError", "Environment", "ExperimentConfig", "RegretTrace", "RunResult",
    "dp_optimal_policy", "frank_wolfe", "generate_environment", "load_config", "oracle_comparators",
    "run_experiment", "run_sweep",
]
