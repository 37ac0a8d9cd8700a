from .config import ExperimentConfig, load_config, parse_config
from .report import emit_report, load_records_csv, load_store, summarize
from .runner import ResultsStore, prepare_experiment, run_suite

__all__ = [
    "ExperimentConfig",
    "ResultsStore",
    "emit_report",
    "load_config",
    "load_records_csv",
    "load_store",
    "parse_config",
    "prepare_experiment",
    "run_suite",
    "summarize",
]
