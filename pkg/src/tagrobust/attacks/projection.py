"""Projection onto the capped simplex ``{s in [0,1]^m : sum(s) <= delta}``."""
from __future__ import annotations

import numpy as np


def project_budget(s, delta: float, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Euclidean projection of ``s`` onto ``[0,1]^m`` with ``sum <= delta``.

    If clipping alone satisfies the budget the clipped vector is returned.
    Otherwise the shift ``mu`` with ``sum(clip(s - mu, 0, 1)) == delta`` is
    found by bisection; the feasible end of the bracket is returned, so the
    result never exceeds the budget.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    s = np.asarray(s, dtype=np.float64)
    clipped = np.clip(s, 0.0, 1.0)
    if clipped.sum() <= delta:
        return clipped
    if delta == 0:
        return np.zeros_like(s)
    lo, hi = float(s.min()) - 1.0, float(s.max())
    for _ in range(max_iter):
        mu = 0.5 * (lo + hi)
        total = np.clip(s - mu, 0.0, 1.0).sum()
        if total > delta:
            lo = mu
        else:
            hi = mu
            if delta - total <= tol:
                break
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    return np.clip(s - hi, 0.0, 1.0)
