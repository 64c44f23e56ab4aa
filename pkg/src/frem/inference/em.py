"""Closed-form EM step for mass-action rate constants."""
from __future__ import annotations

import numpy as np


class DegenerateDataError(ValueError):
    """A channel fired but its monomial integral is zero, so no finite maximizer exists."""


def complete_loglik(theta, sum_R, sum_F) -> float:
    """``sum_j log(c_j) R_j - c_j F_j``, with ``0 log 0 = 0`` and ``-inf`` if ``c_j = 0 < R_j``."""
    c = np.asarray(theta, dtype=np.float64)
    R = np.asarray(sum_R, dtype=np.float64)
    F = np.asarray(sum_F, dtype=np.float64)
    if np.any((c == 0) & (R > 0)):
        return -np.inf
    with np.errstate(divide="ignore"):
        logc = np.where(R > 0, np.log(np.where(c > 0, c, 1.0)), 0.0)
    return float(np.sum(logc * R - c * F))


def em_update(avg_R, avg_F) -> np.ndarray:
    """``c_j = sum_k avg_R[k, j] / sum_k avg_F[k, j]``; channels with both sums zero get 0.

    Accepts per-interval ``(K, J)`` arrays or already-summed ``(J,)`` vectors.
    """
    R = np.asarray(avg_R, dtype=np.float64)
    F = np.asarray(avg_F, dtype=np.float64)
    if R.ndim == 2:
        R, F = R.sum(axis=0), F.sum(axis=0)
    bad = np.nonzero((F <= 0) & (R > 0))[0]
    if bad.size:
        raise DegenerateDataError(f"channels {bad.tolist()} fired with zero monomial integral")
    out = np.zeros_like(R)
    live = F > 0
    out[live] = R[live] / F[live]
    return out
