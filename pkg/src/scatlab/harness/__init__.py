"""Configuration, check registry, reports, sweeps and the command line interface."""

from .checks import REGISTRY
from .config import ExperimentConfig, load_config, parse_config
from .report import RunReport, read_matrix_dump, revalidate
from .runner import run, sweep

__all__ = ["REGISTRY", "ExperimentConfig", "load_config", "parse_config", "RunReport",
           "read_matrix_dump", "revalidate", "run", "sweep"]
