"""Multi-chain convergence diagnostics: potential scale reduction and moving averages."""
from __future__ import annotations

import numpy as np


class UndefinedDiagnostic(ValueError):
    """The within-chain variance is zero, so R-hat is undefined."""


def rhat(chains, p: int | None = None) -> float:
    """Potential scale reduction of ``N`` scalar chains over their first ``p`` values.

    ``B`` is the variance of the chain means (divisor ``N - 1``), ``W`` the mean
    of the within-chain variances (divisor ``p - 1``), ``V = (p-1)/p W + B``
    and the result is ``sqrt(V / W)``.
    """
    X = np.asarray(chains, dtype=np.float64)
    if p is not None:
        X = X[:, :p]
    N, p = X.shape
    if N < 2 or p < 2:
        raise ValueError(f"need at least 2 chains of length 2, got {N} of length {p}")
    means = X.mean(axis=1)
    B = np.sum((means - means.mean()) ** 2) / (N - 1)
    W = np.mean(np.sum((X - means[:, None]) ** 2, axis=1) / (p - 1))
    if not W > 0:
        raise UndefinedDiagnostic("within-chain variance is zero")
    V = (p - 1) / p * W + B
    return float(np.sqrt(V / W))


def rhat_per_coordinate(traces) -> np.ndarray:
    """R-hat of each coordinate of ``(N, p, J)`` traces; nan where undefined."""
    T = np.asarray(traces, dtype=np.float64)
    out = np.full(T.shape[2], np.nan)
    for j in range(T.shape[2]):
        try:
            out[j] = rhat(T[:, :, j])
        except UndefinedDiagnostic:
            pass
    return out


def moving_avg_stat(chains, p: int | None = None, L: int = 3) -> float:
    """Mean over chains of the squared change between the last two order-``L`` moving averages."""
    X = np.asarray(chains, dtype=np.float64)
    if p is not None:
        X = X[:, :p]
    p = X.shape[1]
    if p < L + 1:
        raise ValueError(f"need at least {L + 1} values per chain, got {p}")
    cur = X[:, p - L:].mean(axis=1)
    prev = X[:, p - L - 1:p - 1].mean(axis=1)
    return float(np.mean((cur - prev) ** 2))


def relative_moving_avg_stat(traces, L: int = 3) -> np.ndarray:
    """Per-coordinate moving-average statistic on traces scaled by the current cluster average."""
    T = np.asarray(traces, dtype=np.float64)
    scale = np.abs(T[:, -1, :].mean(axis=0))
    scale[scale == 0] = 1.0
    return np.array([moving_avg_stat(T[:, :, j] / scale[j], L=L) for j in range(T.shape[2])])
