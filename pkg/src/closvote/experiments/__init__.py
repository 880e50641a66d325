"""Configuration-driven experiments and the command-line interface."""

from .config import PRESETS, ConfigError, ExperimentConfig
from .metrics import EngineOutput, EpochScore, normal_ci, score_epoch
from .runner import MetricsReport, run_experiment, run_trial, trial_seeds

__all__ = ["PRESETS", "ConfigError", "ExperimentConfig", "EngineOutput", "EpochScore",
           "MetricsReport", "normal_ci", "run_experiment", "run_trial", "score_epoch",
           "trial_seeds"]
