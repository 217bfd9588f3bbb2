"""Guardual: a conservative training threshold and a balanced test threshold."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..attacks.candidates import cosine_pairs
from ..errors import EmptySimilarityClass
from ..graph import TextAttributedGraph
from .filters import SimilarityFilterConfig, similarity_filter

CONSERVATIVE_WEIGHTS = (7, 3)   # 0.7 preserve + 0.3 filter
BALANCED_WEIGHTS = (1, 1)       # 0.5 preserve + 0.5 filter


@dataclass(frozen=True)
class DualThresholds:
    conservative: float
    balanced: float
    grid: int = 101
    dataset: str = ""

    def to_json(self) -> dict:
        return {"dataset": self.dataset, "conservative": self.conservative,
                "balanced": self.balanced, "grid": self.grid}

    def save(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")
        return p

    @classmethod
    def load(cls, path) -> "DualThresholds":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d["conservative"], d["balanced"], d.get("grid", 101), d.get("dataset", ""))


def threshold_grid(points: int = 101) -> np.ndarray:
    """``points`` evenly spaced thresholds on [0, 1] (``k / (points - 1)``)."""
    return np.arange(points) / (points - 1)


def _counts(intra, inter, grid):
    intra = np.sort(np.asarray(intra, dtype=np.float64))
    inter = np.sort(np.asarray(inter, dtype=np.float64))
    kp = len(intra) - np.searchsorted(intra, grid, side="left")   # intra >= tau
    kf = np.searchsorted(inter, grid, side="left")                # inter < tau
    return kp.astype(np.int64), kf.astype(np.int64)


def select_thresholds(intra, inter, points: int = 101) -> tuple[float, float]:
    """Smallest grid thresholds maximising the 70/30 and 50/50 weighted objectives.

    Scores are compared as exact integers (``w_p*kp*|inter| + w_f*kf*|intra|``)
    so that ties are resolved without floating-point noise.
    """
    if len(intra) == 0 or len(inter) == 0:
        raise EmptySimilarityClass("need both intra- and inter-class edges")
    grid = threshold_grid(points)
    kp, kf = _counts(intra, inter, grid)
    n_p, n_f = len(intra), len(inter)
    out = []
    for wp, wf in (CONSERVATIVE_WEIGHTS, BALANCED_WEIGHTS):
        score = wp * kp * n_f + wf * kf * n_p
        out.append(float(grid[int(np.argmax(score))]))
    return out[0], out[1]


def visible_edge_similarities(features, edges, labels, visible) -> tuple[np.ndarray, np.ndarray]:
    """Cosine similarities of edges whose endpoints both have visible labels."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(labels)
    visible = np.asarray(visible)
    if visible.dtype != bool:
        mask = np.zeros(len(labels), dtype=bool)
        mask[visible.astype(np.int64)] = True
        visible = mask
    keep = visible[edges[:, 0]] & visible[edges[:, 1]]
    e = edges[keep]
    sims = cosine_pairs(features, e[:, 0], e[:, 1])
    same = labels[e[:, 0]] == labels[e[:, 1]]
    return sims[same], sims[~same]


def guardual_thresholds(features, edges, labels, train_mask, predicted=None,
                        points: int = 101, dataset: str = "") -> DualThresholds:
    """Fit both thresholds from edges among label-visible nodes.

    Visible labels are the training labels; when ``predicted`` is given its
    labels are used for the remaining nodes.
    """
    labels = np.asarray(labels)
    n = len(labels)
    train = np.asarray(train_mask)
    if train.dtype != bool:
        m = np.zeros(n, dtype=bool)
        m[train.astype(np.int64)] = True
        train = m
    vis_labels = labels.copy()
    visible = train.copy()
    if predicted is not None:
        vis_labels = np.where(train, labels, np.asarray(predicted))
        visible[:] = True
    intra, inter = visible_edge_similarities(features, edges, vis_labels, visible)
    cons, bal = select_thresholds(intra, inter, points)
    return DualThresholds(cons, bal, points, dataset)


def guardual_filter(graph: TextAttributedGraph, thresholds: DualThresholds, phase: str,
                    features=None):
    """Apply the conservative (``phase='train'``) or balanced (``'test'``) filter."""
    tau = thresholds.conservative if phase == "train" else thresholds.balanced
    return similarity_filter(graph, features, SimilarityFilterConfig("cosine", tau))
