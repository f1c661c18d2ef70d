from __future__ import annotations

import numpy as np

__all__ = ["benjamini_hochberg"]


def benjamini_hochberg(p_values, alpha: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up procedure; returns a boolean reject mask.

    The largest k with ``p_(k) <= k * alpha / m`` is found on the sorted
    p-values and hypotheses 1..k are rejected. Tied p-values always share
    a decision.
    """
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    reject = np.zeros(m, dtype=bool)
    if m == 0:
        return reject
    order = np.argsort(p, kind="stable")
    below = np.flatnonzero(p[order] <= alpha * np.arange(1, m + 1) / m)
    if below.size:
        reject[order[: below[-1] + 1]] = True
    return reject
