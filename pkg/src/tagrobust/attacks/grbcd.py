"""Greedy randomized block coordinate descent over discrete edge flips."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..errors import NoFeasibleSample
from ..gcn import GcnModel, attack_loss, gcn_loss_and_grad_adj
from ..graph import Budget, TextAttributedGraph
from .candidates import PairMask, candidate_pairs
from .perturbation import PerturbationSet, config_hash


@dataclass
class GrbcdConfig:
    budget: Budget = field(default_factory=Budget)
    block_size: int = 1_000_000
    trials_per_iter: int = 50
    final_samples: int = 20
    tolerance: float = 1e-7
    patience: int = 1
    seed: int = 0
    loss: str = "tanh-margin"
    max_candidates: Optional[int] = 2_000_000

    def __post_init__(self):
        if self.block_size < self.budget.delta_struct:
            raise ValueError("block_size must be at least the structure budget")
        if self.trials_per_iter < 1 or self.final_samples < 1 or self.patience < 1:
            raise ValueError("trial, sample and patience counts must be positive")


def attack_grbcd(graph: TextAttributedGraph, surrogate: GcnModel, target_nodes,
                 cfg: GrbcdConfig, candidate_mask: Optional[PairMask] = None) -> PerturbationSet:
    """Greedy gradient-scored flipping over random blocks of candidate pairs.

    One iteration draws a random block and runs up to ``trials_per_iter``
    greedy steps on it; every step recomputes the loss gradient at the
    current perturbed graph, signs it so that a positive score means the flip
    raises the loss, and toggles the ``ceil(delta / trials_per_iter)`` best
    unflipped pairs with positive score.  Iterations repeat while budget
    remains, until the best attack loss improves by less than ``tolerance``
    for ``patience`` consecutive iterations.  The highest-loss state among
    the last ``final_samples`` steps is returned (never the unperturbed
    start once a step has been taken).
    """
    delta = cfg.budget.delta_struct
    if delta < 1:
        raise NoFeasibleSample("structure budget is zero")
    targets = np.asarray(target_nodes, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    iu, ju = candidate_pairs(graph.n, candidate_mask, cfg.max_candidates, rng)
    m = len(iu)
    X, y = graph.features, graph.labels
    A = graph.adjacency()
    flipped = np.zeros(m, dtype=bool)
    per_step = max(1, math.ceil(delta / cfg.trials_per_iter))

    best_loss = attack_loss(surrogate, X, y, targets, A, cfg.loss)
    # the unperturbed start is only returned when no greedy step was possible
    states = []
    stall = iterations = steps = 0
    while flipped.sum() < delta:
        iterations += 1
        size = min(cfg.block_size, m)
        block = np.arange(m) if size == m else np.sort(rng.choice(m, size=size, replace=False))
        before = best_loss
        for _ in range(cfg.trials_per_iter):
            k = min(per_step, delta - int(flipped.sum()))
            free = block[~flipped[block]]
            if k <= 0 or len(free) == 0:
                break
            _, G = gcn_loss_and_grad_adj(surrogate, X, y, targets, A, cfg.loss)
            score = G[iu[free], ju[free]] * (1.0 - 2.0 * A[iu[free], ju[free]])
            order = np.argsort(-score, kind="stable")[:k]
            order = order[score[order] > 0]
            if not len(order):
                break
            pick = free[order]
            flipped[pick] = True
            u, v = iu[pick], ju[pick]
            A[u, v] = 1.0 - A[u, v]
            A[v, u] = A[u, v]
            steps += 1
            loss = attack_loss(surrogate, X, y, targets, A, cfg.loss)
            states.append((loss, flipped.copy()))
            best_loss = max(best_loss, loss)
        if best_loss - before < cfg.tolerance:
            stall += 1
            if stall >= cfg.patience:
                break
        else:
            stall = 0

    tail = states[-cfg.final_samples:] or [(best_loss, flipped)]
    final_loss, final = max(tail, key=lambda st: st[0])
    flips = frozenset((int(iu[i]), int(ju[i])) for i in np.flatnonzero(final))
    prov = {
        "attack": "grbcd",
        "config_hash": config_hash(asdict(cfg)),
        "seed": cfg.seed,
        "iterations": iterations,
        "steps": steps,
        "flips_per_step": per_step,
        "surrogate_loss": float(final_loss),
        "candidates": int(m),
    }
    return PerturbationSet(flips, {}, prov, cfg.budget)
