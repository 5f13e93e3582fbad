"""Experiment orchestration and synthetic data generation."""
from .data import Subject, WindowBatch, label_subject, load_dataset_dir, subject_windows, windows_for
from .protocols import (ExperimentResult, build_registry, loso_folds, personalize, pretrain,
                        run_experiment, write_run)
from .specfile import DatasetSource, ExperimentSpec, load_spec, parse_spec_text
from .synth import SynthConfig, generate_synthetic, write_dataset
from .training import TrainHistory, TrainingConfig, fine_tune, train_model

__all__ = [
    "DatasetSource",
    "ExperimentResult",
    "ExperimentSpec",
    "Subject",
    "SynthConfig",
    "TrainHistory",
    "TrainingConfig",
    "WindowBatch",
    "build_registry",
    "fine_tune",
    "generate_synthetic",
    "label_subject",
    "load_dataset_dir",
    "load_spec",
    "loso_folds",
    "parse_spec_text",
    "personalize",
    "pretrain",
    "run_experiment",
    "subject_windows",
    "train_model",
    "windows_for",
    "write_dataset",
    "write_run",
]
