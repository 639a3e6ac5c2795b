"""Command-line experiments: configs, synthetic data, inference runs and reports."""

from .config import ExperimentConfig, builtin_configs, load_config, parse_config
from .experiment import RunRecord, cli_infer, cli_report, cli_simulate, ingest_external

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "builtin_configs",
    "cli_infer",
    "cli_report",
    "cli_simulate",
    "ingest_external",
    "load_config",
    "parse_config",
]
