"""Class-swap text attack with an optional external rewriter."""
from __future__ import annotations

import math
from collections import Counter
from typing import Optional

import numpy as np

from ..errors import EmptyNodeSet, NoDifferentClassSource, RewriterUnavailable
from ..graph import Budget, Split, TextAttributedGraph
from .perturbation import PerturbationSet, TextReplacement, config_hash
from .rewriter import RewriterClient, build_request
from .sampling import sample_inverse_degree

SCENARIOS = ("evasion", "poisoning")


def _modal_label(labels, nbrs) -> Optional[int]:
    if len(nbrs) == 0:
        return None
    counts = Counter(int(labels[v]) for v in nbrs)
    top = max(counts.values())
    return min(c for c, k in counts.items() if k == top)


def attack_text_classswap(graph: TextAttributedGraph, split: Split, scenario: str, rate: float,
                          seed: int = 0, rewriter: Optional[RewriterClient] = None,
                          class_names=None) -> PerturbationSet:
    """Replace the features (and text) of sampled targets with another class's content.

    Targets come from the test nodes under evasion and the training nodes
    under poisoning; ``floor(rate * |pool|)`` of them are drawn without
    replacement with probability proportional to ``1/degree``.  Each
    target receives the row of a uniformly drawn node whose label differs
    from both the target's label and the modal label of its neighbours,
    falling back to any node of a different class.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    pool = np.asarray(split.test if scenario == "evasion" else split.train, dtype=np.int64)
    if len(pool) == 0:
        raise EmptyNodeSet(f"empty {scenario} target pool")
    labels = graph.labels
    if len(np.unique(labels)) < 2:
        raise NoDifferentClassSource("graph has a single class")
    count = int(math.floor(rate * len(pool) + 1e-9))
    budget = Budget(0, count)
    rng = np.random.default_rng(seed)
    deg = graph.degrees()
    targets = []
    if count:
        targets = sample_inverse_degree(pool, deg, rng, size=count, replace=False).tolist()

    nbrs = graph.neighbors()
    names = list(class_names) if class_names is not None else [f"class_{c}" for c in range(graph.class_count)]
    reps = {}
    warnings = []
    all_nodes = np.arange(graph.n)
    for t in targets:
        t = int(t)
        modal = _modal_label(labels, nbrs[t])
        ok = labels != labels[t]
        preferred = ok & (labels != modal) if modal is not None else ok
        src_pool = all_nodes[preferred] if preferred.any() else all_nodes[ok]
        src = int(rng.choice(src_pool))
        text = graph.texts[src] if graph.texts is not None else None
        rep = TextReplacement(tuple(float(x) for x in graph.features[src]), src, text)
        if rewriter is not None:
            req = build_request(t, graph.texts[t] if graph.texts else "", names[labels[t]],
                                [names[labels[v]] for v in nbrs[t]], names)
            try:
                new_text = rewriter.rewrite(req)
                row = np.asarray(rewriter.embed(new_text), dtype=np.float64).reshape(-1)
                if row.shape[0] != graph.feature_dim:
                    raise RewriterUnavailable(
                        f"embedding dim {row.shape[0]} != feature dim {graph.feature_dim}")
                rep = TextReplacement(tuple(float(x) for x in row), None, new_text)
            except RewriterUnavailable as exc:
                warnings.append({"node": t, "warning": str(exc), "fallback": "class-swap"})
        reps[t] = rep

    prov = {
        "attack": "text-classswap",
        "config_hash": config_hash({"scenario": scenario, "rate": rate, "seed": seed,
                                    "rewriter": bool(rewriter)}),
        "scenario": scenario,
        "rate": rate,
        "seed": seed,
        "pool_size": int(len(pool)),
        "rewriter": rewriter.url if rewriter is not None else None,
        "warnings": warnings,
    }
    return PerturbationSet(frozenset(), reps, prov, budget)
