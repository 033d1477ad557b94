"""Configuration, runners and command-line interface for the convergence studies."""

from .config import ConfigError, ExperimentConfig, load_config
from .runners import (ExperimentResult, run_clustering, run_coupling, run_degree_law,
                      run_distances, run_generate, run_neighborhood_convergence, run_verify_kernel)

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "ExperimentResult", "run_clustering",
    "run_coupling", "run_degree_law", "run_distances", "run_generate",
    "run_neighborhood_convergence", "run_verify_kernel",
]
