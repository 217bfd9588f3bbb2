"""DICE-style heuristic: disconnect internally, connect externally."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..errors import ExhaustedMoves, TagRobustError
from ..graph import Budget, TextAttributedGraph
from .perturbation import PerturbationSet, config_hash
from .sampling import sample_inverse_degree

UNKNOWN = -1


@dataclass
class DiceConfig:
    budget: Budget = field(default_factory=Budget)
    add_probability: float = 0.5
    seed: int = 0
    training_aware: bool = True

    def __post_init__(self):
        if not 0.0 <= self.add_probability <= 1.0:
            raise ValueError("add_probability must lie in [0, 1]")


def visible_labels(graph: TextAttributedGraph, train_nodes, predictions=None) -> np.ndarray:
    """Train labels, surrogate predictions elsewhere (or ``-1`` when absent)."""
    if predictions is None:
        vis = np.full(graph.n, UNKNOWN, dtype=np.int64)
    else:
        vis = np.asarray(predictions, dtype=np.int64).copy()
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    vis[train_nodes] = graph.labels[train_nodes]
    return vis


def attack_dice(graph: TextAttributedGraph, labels_visible, cfg: DiceConfig,
                train_nodes=None, strict: bool = False) -> PerturbationSet:
    """Remove intra-label edges and add inter-label edges at random.

    Each of the ``delta_struct`` steps removes an existing edge whose
    endpoints share a visible label (with probability
    ``1 - add_probability``; restricted to edges touching a training node when
    any exist) or adds an absent edge between different visible labels.  The
    first endpoint is drawn with probability proportional to ``1/degree``
    among nodes that have a legal move, the second likewise among the legal
    partners.  Nodes with an unknown label (``-1``) are never touched.  If
    the chosen move type is impossible the other type is tried (when its
    probability is non-zero); if neither is possible the partial set is
    returned with ``provenance["exhausted"] = True``, or ``ExhaustedMoves``
    is raised when ``strict``.
    """
    lab = np.asarray(labels_visible, dtype=np.int64)
    n = graph.n
    known = lab != UNKNOWN
    if len(np.unique(lab[known])) < 2:
        raise TagRobustError("DICE needs at least two visible classes")
    rng = np.random.default_rng(cfg.seed)
    adj = graph.adjacency(dtype=bool)
    flipped = np.zeros((n, n), dtype=bool)
    deg = graph.degrees().astype(np.int64)
    both = known[:, None] & known[None, :]
    same = (lab[:, None] == lab[None, :]) & both
    diff = (lab[:, None] != lab[None, :]) & both
    np.fill_diagonal(diff, False)
    np.fill_diagonal(same, False)
    is_train = np.zeros(n, dtype=bool)
    if train_nodes is not None:
        is_train[np.asarray(train_nodes, dtype=np.int64)] = True
    touches_train = is_train[:, None] | is_train[None, :]

    def legal(kind):
        if kind == "add":
            return diff & ~adj & ~flipped
        L = same & adj & ~flipped
        if cfg.training_aware and train_nodes is not None:
            T = L & touches_train
            if T.any():
                return T
        return L

    moves = []
    flips = set()
    exhausted = False
    p_add = cfg.add_probability
    for _ in range(cfg.budget.delta_struct):
        first = "add" if rng.random() < p_add else "remove"
        order = [first]
        other = "remove" if first == "add" else "add"
        if (other == "add" and p_add > 0) or (other == "remove" and p_add < 1):
            order.append(other)
        done = False
        for kind in order:
            L = legal(kind)
            rows = np.flatnonzero(L.any(axis=1))
            if len(rows) == 0:
                continue
            u = int(sample_inverse_degree(rows, deg, rng))
            v = int(sample_inverse_degree(np.flatnonzero(L[u]), deg, rng))
            flipped[u, v] = flipped[v, u] = True
            adj[u, v] = adj[v, u] = not adj[u, v]
            step = 1 if kind == "add" else -1
            deg[u] += step
            deg[v] += step
            flips.add((min(u, v), max(u, v)))
            moves.append([kind, u, v])
            done = True
            break
        if not done:
            exhausted = True
            break

    prov = {
        "attack": "dice",
        "config_hash": config_hash(asdict(cfg)),
        "seed": cfg.seed,
        "moves": moves,
        "exhausted": exhausted,
    }
    pset = PerturbationSet(frozenset(flips), {}, prov, cfg.budget)
    if exhausted and strict:
        raise ExhaustedMoves(
            f"no legal move after {len(flips)} of {cfg.budget.delta_struct} flips", pset)
    return pset
