"""Experiment driver: configs, metrics, result tables and the command line."""
from .cli import main
from .config import METHODS, OUTPUT_ENV, SCENARIOS, ExperimentConfig, load_config, save_config
from .experiment import (
    build_recording, evaluate, generate_splits, load_splits, rerun_from_manifest, run_experiment,
    run_sweep, save_splits,
)
from .metrics import (
    MetricRow, MetricsReport, bootstrap_std, compute_acc_at, compute_mae, errors_cm, summarize,
)
from .results import emit_results, parse_report, read_results, read_trials, render_report, write_trials

__all__ = [
    "main", "METHODS", "OUTPUT_ENV", "SCENARIOS", "ExperimentConfig", "load_config", "save_config",
    "build_recording", "evaluate", "generate_splits", "load_splits", "rerun_from_manifest",
    "run_experiment", "run_sweep", "save_splits", "MetricRow", "MetricsReport", "bootstrap_std",
    "compute_acc_at", "compute_mae", "errors_cm", "summarize", "emit_results", "parse_report",
    "read_results", "read_trials", "render_report", "write_trials",
]
