"""Similarity-based edge filtering (GNNGuard-style cosine, Jaccard)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..attacks.candidates import cosine_pairs
from ..errors import EmptySimilarityClass
from ..graph import TextAttributedGraph

METRIC_RANGES = {"cosine": (-1.0, 1.0), "jaccard": (0.0, 1.0)}


@dataclass(frozen=True)
class SimilarityFilterConfig:
    metric: str = "cosine"
    threshold: float = 0.5

    def __post_init__(self):
        if self.metric not in METRIC_RANGES:
            raise ValueError(f"metric must be one of {sorted(METRIC_RANGES)}")
        lo, hi = METRIC_RANGES[self.metric]
        if not lo <= self.threshold <= hi:
            raise ValueError(f"{self.metric} threshold must lie in [{lo}, {hi}]")


@dataclass(frozen=True, eq=False)
class FilterResult:
    graph: TextAttributedGraph
    removed: frozenset
    similarities: np.ndarray


def jaccard_pairs(X, iu, ju) -> np.ndarray:
    B = np.asarray(X) > 0
    inter = np.logical_and(B[iu], B[ju]).sum(axis=1)
    union = np.logical_or(B[iu], B[ju]).sum(axis=1)
    out = np.zeros(len(iu))
    ok = union > 0
    out[ok] = inter[ok] / union[ok]
    return out


def edge_similarities(graph: TextAttributedGraph, features=None, metric: str = "cosine") -> np.ndarray:
    X = graph.features if features is None else np.asarray(features, dtype=np.float64)
    if graph.num_edges == 0:
        return np.zeros(0)
    iu, ju = graph.edges[:, 0], graph.edges[:, 1]
    return cosine_pairs(X, iu, ju) if metric == "cosine" else jaccard_pairs(X, iu, ju)


def similarity_filter(graph: TextAttributedGraph, features=None,
                      cfg: Optional[SimilarityFilterConfig] = None) -> FilterResult:
    """Keep edge ``(u, v)`` iff its similarity is at least the threshold."""
    cfg = cfg or SimilarityFilterConfig()
    sims = edge_similarities(graph, features, cfg.metric)
    keep = sims >= cfg.threshold
    removed = frozenset((int(u), int(v)) for u, v in graph.edges[~keep])
    return FilterResult(graph.replace(edges=graph.edges[keep]), removed, sims)


def threshold_objective(intra_sims, inter_sims, tau: float) -> tuple[float, float]:
    """``(P_preserve, P_filter)``: share of intra sims >= tau, share of inter sims < tau."""
    intra = np.asarray(intra_sims, dtype=np.float64)
    inter = np.asarray(inter_sims, dtype=np.float64)
    if len(intra) == 0 or len(inter) == 0:
        raise EmptySimilarityClass("need at least one intra- and one inter-class similarity")
    return float(np.mean(intra >= tau)), float(np.mean(inter < tau))
