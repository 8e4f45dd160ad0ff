"""Experiment configuration, dataset assembly, training and evaluation."""
from .config import (
    TOY_WIDTHS,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    toy_config,
)
from .data import DataItem, Dataset, build_dataset, make_item, single_pair_dataset
from .evaluate import ablate, evaluate, export_inference, super_resolve
from .train import (
    TrainingDiverged,
    TrainResult,
    endpoint_error,
    pretrain_flow,
    pretrain_translations,
    random_crop,
    scheduled_lr,
    train,
    translation_pair,
)

__all__ = [
    "TOY_WIDTHS", "ConfigError", "DataItem", "Dataset", "ExperimentConfig", "TrainResult",
    "TrainingDiverged", "ablate", "build_dataset", "endpoint_error", "evaluate", "export_inference",
    "load_config", "make_item", "parse_config", "pretrain_flow", "pretrain_translations",
    "random_crop", "scheduled_lr", "single_pair_dataset", "super_resolve", "toy_config", "train", "translation_pair",
]
