"""Candidate node-pair spaces shared by the gradient attacks."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import EmptyCandidateSpace

PairMask = Callable[[np.ndarray, np.ndarray], np.ndarray]


def candidate_pairs(n: int, mask: Optional[PairMask] = None, max_candidates: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle pairs ``(iu, ju)``, filtered by ``mask(iu, ju) -> bool array``.

    When more than ``max_candidates`` pairs survive, a uniform random subset
    of that size is kept (sorted, so indices stay in row-major order).
    """
    iu, ju = np.triu_indices(n, k=1)
    if mask is not None:
        keep = np.asarray(mask(iu, ju), dtype=bool)
        iu, ju = iu[keep], ju[keep]
    if len(iu) == 0:
        raise EmptyCandidateSpace("no candidate node pairs")
    if max_candidates is not None and len(iu) > max_candidates:
        rng = rng if rng is not None else np.random.default_rng(0)
        idx = np.sort(rng.choice(len(iu), size=max_candidates, replace=False))
        iu, ju = iu[idx], ju[idx]
    return iu, ju


def cosine_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; rows of zeros have similarity 0 with everything."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    Xn = X / safe[:, None]
    S = Xn @ Xn.T
    zero = norms == 0
    S[zero, :] = 0.0
    S[:, zero] = 0.0
    return np.clip(S, -1.0, 1.0)


def cosine_pairs(X: np.ndarray, iu, ju) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    dots = np.einsum("ij,ij->i", X[iu], X[ju])
    denom = norms[iu] * norms[ju]
    out = np.zeros(len(iu))
    ok = denom > 0
    out[ok] = dots[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def similarity_mask(X: np.ndarray, threshold: float) -> PairMask:
    """Mask admitting pairs whose cosine similarity is strictly above ``threshold``."""
    def mask(iu, ju):
        return cosine_pairs(X, iu, ju) > threshold
    return mask
