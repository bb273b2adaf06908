"""Configuration, orchestration and persistence of experiments."""

from .config import ExperimentConfig, config_from_dict, parse_config
from .io import ResultTable
from .runner import rerun, run

__all__ = ["ExperimentConfig", "ResultTable", "config_from_dict", "parse_config", "rerun", "run"]
