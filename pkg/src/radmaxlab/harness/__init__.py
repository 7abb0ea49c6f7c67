"""Configuration, reports, experiments and the command-line interface."""

from .config import ExperimentConfig, load_config, parse_config_text, thread_cap
from .experiments import (EXPERIMENTS, run_carleson, run_counterexample, run_kato, run_paraproduct, run_quadratic,
                          run_rbound, run_rmf, run_unperturbed_checks)
from .report import Report
