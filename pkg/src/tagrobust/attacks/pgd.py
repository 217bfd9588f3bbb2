"""Projected-gradient structure attack and its similarity-constrained variant."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..errors import EmptyCandidateSpace, NoFeasibleSample
from ..gcn import GcnModel, attack_loss, gcn_loss_and_grad_adj
from ..graph import Budget, TextAttributedGraph
from .candidates import PairMask, candidate_pairs, similarity_mask
from .perturbation import PerturbationSet, config_hash
from .projection import project_budget


@dataclass
class PgdConfig:
    budget: Budget = field(default_factory=Budget)
    step_size: float = 0.1
    opt_epochs: int = 200
    sample_epochs: int = 20
    seed: int = 0
    max_candidates: Optional[int] = 2_000_000
    # bounded objective; plain "ce" spends the budget on a handful of nodes
    loss: str = "tanh-margin"

    def __post_init__(self):
        if self.step_size <= 0 or self.opt_epochs < 1 or self.sample_epochs < 1:
            raise ValueError("step size and epoch counts must be positive")


def _relaxed(A, iu, ju, s):
    """``A + (1 - 2A) * s`` on the candidate pairs, kept symmetric."""
    R = A.copy()
    vals = A[iu, ju] + (1.0 - 2.0 * A[iu, ju]) * s
    R[iu, ju] = vals
    R[ju, iu] = vals
    return R


def _flipped(A, iu, ju, chosen):
    R = A.copy()
    u, v = iu[chosen], ju[chosen]
    R[u, v] = 1.0 - R[u, v]
    R[v, u] = R[u, v]
    return R


def attack_pgd(graph: TextAttributedGraph, surrogate: GcnModel, target_nodes,
               cfg: PgdConfig, candidate_mask: Optional[PairMask] = None,
               name: str = "pgd") -> PerturbationSet:
    """Continuous relaxation + projected gradient ascent + Bernoulli binarization.

    The ascent direction is the attack-loss gradient scaled by its largest
    magnitude, so ``step_size`` is expressed in units of the relaxation
    variables; the step decays as ``step_size / sqrt(t)``.
    """
    delta = cfg.budget.delta_struct
    if delta < 1:
        raise NoFeasibleSample("structure budget is zero")
    targets = np.asarray(target_nodes, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    iu, ju = candidate_pairs(graph.n, candidate_mask, cfg.max_candidates, rng)
    A = graph.adjacency()
    X, y = graph.features, graph.labels
    sign = 1.0 - 2.0 * A[iu, ju]

    s = np.zeros(len(iu))
    for t in range(1, cfg.opt_epochs + 1):
        _, G = gcn_loss_and_grad_adj(surrogate, X, y, targets, _relaxed(A, iu, ju, s), cfg.loss)
        g = G[iu, ju] * sign
        gmax = np.abs(g).max()
        if gmax > 0:
            s = s + (cfg.step_size / np.sqrt(t)) * g / gmax
        s = project_budget(s, delta)

    best_loss, best = -np.inf, None
    for k in range(cfg.sample_epochs):
        draw = np.random.default_rng([cfg.seed, k]).random(len(s)) < s
        if draw.sum() > delta:
            continue
        loss = attack_loss(surrogate, X, y, targets, _flipped(A, iu, ju, draw), cfg.loss)
        if loss > best_loss:
            best_loss, best = loss, draw
    fallback = best is None
    if fallback:
        best = np.zeros(len(s), dtype=bool)
        best[np.argsort(-s, kind="stable")[:delta]] = True
        best &= s > 0
        best_loss = attack_loss(surrogate, X, y, targets, _flipped(A, iu, ju, best), cfg.loss)

    flips = frozenset((int(iu[i]), int(ju[i])) for i in np.flatnonzero(best))
    prov = {
        "attack": name,
        "config_hash": config_hash(asdict(cfg)),
        "seed": cfg.seed,
        "binarization": "final relaxation",
        "fallback_topk": fallback,
        "surrogate_loss": float(best_loss),
        "candidates": int(len(iu)),
    }
    return PerturbationSet(flips, {}, prov, cfg.budget)


def attack_pgd_guard(graph: TextAttributedGraph, surrogate: GcnModel, target_nodes,
                     cfg: PgdConfig, similarity_threshold: float,
                     sim_features=None) -> PerturbationSet:
    """PGD restricted to pairs with cosine similarity above ``similarity_threshold``."""
    X = graph.features if sim_features is None else np.asarray(sim_features, dtype=np.float64)
    try:
        pset = attack_pgd(graph, surrogate, target_nodes, cfg,
                          similarity_mask(X, similarity_threshold), name="pgd-guard")
    except EmptyCandidateSpace as exc:
        raise EmptyCandidateSpace(
            f"no pair has cosine similarity above {similarity_threshold}") from exc
    pset.provenance["similarity_threshold"] = similarity_threshold
    return pset
