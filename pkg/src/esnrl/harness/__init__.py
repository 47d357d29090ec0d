"""Seeded, configuration-driven experiment runs."""

from .config import ExperimentConfig, load_config, resolve_config
from .pipeline import oracle_summary, run_experiment, run_offline_one_step, run_online, sweep
from .report import ExperimentReport, emit_report

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "emit_report",
    "load_config",
    "oracle_summary",
    "resolve_config",
    "run_experiment",
    "run_offline_one_step",
    "run_online",
    "sweep",
]
