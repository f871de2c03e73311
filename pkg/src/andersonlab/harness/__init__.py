"""Experiment configuration, seeding and execution."""
from .._mc import derive_seed, map_ordered
from .config import ConfigError, ExperimentConfig, load_config
from .runner import RunResult, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "derive_seed", "load_config", "map_ordered",
           "run_experiment"]
