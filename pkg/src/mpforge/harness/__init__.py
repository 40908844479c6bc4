"""Configuration, file formats, dataset generation and evaluation suites."""

from .config import Config, ConfigError, load_config, save_config
from .dataset import Dataset, DatasetRecord, dataset_digest, generate_dataset, load_dataset, process_seed
from .evaluation import SuiteReport, run_eval_suite, summarize, tto_benchmark
from .io import FormatError, load_problem, load_scene, load_trajectory, save_problem, save_scene, save_trajectory

__all__ = [
    "Config",
    "ConfigError",
    "Dataset",
    "DatasetRecord",
    "FormatError",
    "SuiteReport",
    "dataset_digest",
    "generate_dataset",
    "load_config",
    "load_dataset",
    "load_problem",
    "load_scene",
    "load_trajectory",
    "process_seed",
    "run_eval_suite",
    "save_config",
    "save_problem",
    "save_scene",
    "save_trajectory",
    "summarize",
    "tto_benchmark",
]
