"""Similarity filters, Guardual thresholds and the Auto detect-and-recover pipeline."""
from .auto import (AutoResult, AutoTrainingSet, DetectionReport, attack_ratio,
                   auto_build_training_set, auto_detect_structure, auto_infer,
                   train_auto_predictor)
from .filters import (FilterResult, SimilarityFilterConfig, edge_similarities, jaccard_pairs,
                      similarity_filter, threshold_objective)
from .guardual import (DualThresholds, guardual_filter, guardual_thresholds, select_thresholds,
                       threshold_grid)

__all__ = [
    "AutoResult", "AutoTrainingSet", "DetectionReport", "DualThresholds", "FilterResult",
    "SimilarityFilterConfig", "attack_ratio", "auto_build_training_set", "auto_detect_structure",
    "auto_infer", "edge_similarities", "guardual_filter", "guardual_thresholds",
    "jaccard_pairs", "select_thresholds", "similarity_filter", "threshold_grid",
    "threshold_objective", "train_auto_predictor",
]
