"""Inverse-degree node sampling shared by DICE and the text attack."""
from __future__ import annotations

import numpy as np


def inverse_degree_weights(degrees) -> np.ndarray:
    """Normalised ``1/degree`` weights; isolated nodes count as degree 1."""
    d = np.maximum(np.asarray(degrees, dtype=np.float64), 1.0)
    w = 1.0 / d
    return w / w.sum()


def sample_inverse_degree(candidates, degrees, rng: np.random.Generator, size=None,
                          replace: bool = True):
    """Draw from ``candidates`` with probability proportional to ``1/degree``.

    ``degrees`` is indexed by node id (full-graph degree vector).
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    p = inverse_degree_weights(np.asarray(degrees)[candidates])
    return rng.choice(candidates, size=size, replace=replace, p=p)
