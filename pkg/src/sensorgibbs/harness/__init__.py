"""Experiment plumbing: configuration, presets, replication runner and CLI."""

from .config import ExperimentConfig, load_config, parse_toml, validate
from .presets import preset
from .runner import run_experiment, sweep_beta

__all__ = ["ExperimentConfig", "load_config", "parse_toml", "preset", "run_experiment", "sweep_beta", "validate"]
