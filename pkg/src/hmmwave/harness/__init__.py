"""Configuration, experiment runners, result output and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config_text, resolve
from .experiments import (
    ResultRecord,
    h_convergence,
    kernel_convergence_study,
    run_example,
    run_longtime,
)
from .metrics import grid_error

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRecord",
    "grid_error",
    "h_convergence",
    "kernel_convergence_study",
    "load_config",
    "parse_config_text",
    "resolve",
    "run_example",
    "run_longtime",
]
