"""Separation metrics between intra- and inter-class edge similarities."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks.candidates import cosine_pairs
from .defenses.filters import threshold_objective
from .defenses.guardual import threshold_grid
from .errors import EmptySimilarityClass, NoEdges, ZeroVariance
from .graph import TextAttributedGraph

PERCENTILE_METHOD = "linear"


@dataclass(frozen=True, eq=False)
class EdgeSimilaritySample:
    intra: np.ndarray
    inter: np.ndarray

    def __post_init__(self):
        for name in ("intra", "inter"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if np.any(np.abs(arr) > 1.0 + 1e-12):
                raise ValueError(f"{name} similarities must lie in [-1, 1]")
            object.__setattr__(self, name, arr)

    def require_both(self):
        if len(self.intra) == 0 or len(self.inter) == 0:
            raise EmptySimilarityClass(
                f"need both classes (intra={len(self.intra)}, inter={len(self.inter)})")


def split_edge_similarities(graph: TextAttributedGraph, features=None, labels=None) -> EdgeSimilaritySample:
    """Cosine similarity of every edge, partitioned by label agreement.

    Edges touching an all-zero feature row get similarity 0.
    """
    if graph.num_edges == 0:
        raise NoEdges("graph has no edges")
    X = graph.features if features is None else np.asarray(features, dtype=np.float64)
    y = graph.labels if labels is None else np.asarray(labels)
    iu, ju = graph.edges[:, 0], graph.edges[:, 1]
    sims = np.clip(cosine_pairs(X, iu, ju), -1.0, 1.0)
    same = y[iu] == y[ju]
    return EdgeSimilaritySample(sims[same], sims[~same])


def cohen_d(sample: EdgeSimilaritySample) -> float:
    sample.require_both()
    pooled = (np.var(sample.intra) + np.var(sample.inter)) / 2.0
    if pooled <= 0:
        raise ZeroVariance("both similarity multisets are constant")
    return float((np.mean(sample.intra) - np.mean(sample.inter)) / np.sqrt(pooled))


def auc(sample: EdgeSimilaritySample) -> float:
    """Pairwise AUC, ties counted one half; computed in O(n log n) from sorted counts."""
    sample.require_both()
    inter = np.sort(sample.inter)
    below = np.searchsorted(inter, sample.intra, side="left")
    upto = np.searchsorted(inter, sample.intra, side="right")
    # 2 * (wins + ties / 2) as an exact integer
    twice = int(np.sum(below, dtype=np.int64) + np.sum(upto, dtype=np.int64))
    return twice / (2 * len(sample.intra) * len(sample.inter))


def _objective_counts(intra_sorted, inter_sorted, taus):
    keep = len(intra_sorted) - np.searchsorted(intra_sorted, taus, side="left")
    drop = np.searchsorted(inter_sorted, taus, side="left")
    return keep.astype(np.int64), drop.astype(np.int64)


def discriminability(sample: EdgeSimilaritySample, points: int = 101) -> float:
    """``max_tau (P(intra >= tau) + P(inter < tau)) / 2`` over the grid and every observed value."""
    sample.require_both()
    a, b = np.sort(sample.intra), np.sort(sample.inter)
    taus = np.union1d(threshold_grid(points), np.concatenate([a, b]))
    keep, drop = _objective_counts(a, b, taus)
    na, nb = len(a), len(b)
    best = int(np.max(keep * nb + drop * na))
    return best / (2 * na * nb)


def threshold_gap(sample: EdgeSimilaritySample) -> float:
    sample.require_both()
    q20 = np.percentile(sample.intra, 20, method=PERCENTILE_METHOD)
    q80 = np.percentile(sample.inter, 80, method=PERCENTILE_METHOD)
    return float(q20 - q80)


def histogram_overlap(sample: EdgeSimilaritySample, bins: int = 50) -> float:
    """``sum_i min(h_intra(i), h_inter(i)) dx`` with density histograms on the pooled range."""
    sample.require_both()
    pooled = np.concatenate([sample.intra, sample.inter])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        return 1.0
    ca, _ = np.histogram(sample.intra, bins=bins, range=(lo, hi))
    cb, _ = np.histogram(sample.inter, bins=bins, range=(lo, hi))
    na, nb = len(sample.intra), len(sample.inter)
    # density * dx reduces to count / n, so the sum is an exact ratio of integers
    shared = int(np.sum(np.minimum(ca.astype(np.int64) * nb, cb.astype(np.int64) * na)))
    return shared / (na * nb)


def non_overlap(sample: EdgeSimilaritySample, bins: int = 50) -> float:
    return 1.0 - histogram_overlap(sample, bins)


def preserve_filter_curve(sample: EdgeSimilaritySample, points: int = 101) -> np.ndarray:
    """Rows ``(tau, P_preserve, P_filter)`` for tau on the uniform grid over [0, 1]."""
    sample.require_both()
    rows = [(float(t), *threshold_objective(sample.intra, sample.inter, float(t)))
            for t in threshold_grid(points)]
    return np.array(rows)


METRICS = {
    "cohen_d": cohen_d,
    "auc": auc,
    "discriminability": discriminability,
    "threshold_gap": threshold_gap,
    "non_overlap": non_overlap,
}


def analyze(sample: EdgeSimilaritySample, bins: int = 50) -> dict:
    """Metric dictionary plus the preserve/filter curve, ready for JSON."""
    sample.require_both()
    metrics = {}
    for name, fn in METRICS.items():
        try:
            metrics[name] = fn(sample, bins) if name == "non_overlap" else fn(sample)
        except ZeroVariance:
            metrics[name] = None
    curve = preserve_filter_curve(sample)
    return {
        "metrics": metrics,
        "counts": {"intra": int(len(sample.intra)), "inter": int(len(sample.inter))},
        "curve": [[round(float(t), 2), float(p), float(f)] for t, p, f in curve],
        "metadata": {"percentile_method": f"{PERCENTILE_METHOD} (inclusive)",
                     "histogram_bins": bins, "histogram_range": "pooled min..max"},
    }


def write_report(report: dict, out_dir, sample: EdgeSimilaritySample | None = None) -> list[Path]:
    """Write ``embedding_report.json``, ``curve.csv`` and optionally the raw ``similarities.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "embedding_report.json", out / "curve.csv"]
    paths[0].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "p_preserve", "p_filter"])
        w.writerows([f"{t:.2f}", repr(p), repr(f)] for t, p, f in report["curve"])
    if sample is not None:
        paths.append(out / "similarities.csv")
        with open(paths[2], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "similarity"])
            w.writerows(("intra", repr(float(s))) for s in sample.intra)
            w.writerows(("inter", repr(float(s))) for s in sample.inter)
    return paths
