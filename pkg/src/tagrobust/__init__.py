"""Adversarial robustness toolkit for graph neural networks on text-attributed graphs."""
from .gcn import GcnModel, TrainConfig, accuracy, gcn_train, predict
from .graph import Budget, Split, SplitMode, TextAttributedGraph, load_dataset, make_split, save_dataset
from .synthetic import planted_partition

__version__ = "0.1.0"

__all__ = [
    "Budget", "GcnModel", "Split", "SplitMode", "TextAttributedGraph", "TrainConfig",
    "accuracy", "gcn_train", "load_dataset", "make_split", "planted_partition", "predict",
    "save_dataset",
]
