"""Whitening transform that turns an endpoint cloud into a roughly isotropic one.

``H = alpha (Sigma + c_reg diag(Sigma))^{-1/2}`` with ``alpha`` chosen so that a
ball of radius ``3 alpha`` has the volume of ``M`` unit cubes; the joining
kernel then sees about one partner per unit box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

SINGULAR_RTOL = 1e-12


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def transform_alpha(M: float, d: int) -> float:
    return (M / unit_ball_volume(d)) ** (1.0 / d) / 3.0


@dataclass(frozen=True)
class TransformH:
    whitening: np.ndarray  # (Sigma + c_reg diag Sigma)^{-1/2}
    alpha: float
    zeta: float = 1.0

    @property
    def matrix(self) -> np.ndarray:
        return self.zeta * self.alpha * self.whitening

    def expanded(self, factor: float) -> "TransformH":
        return replace(self, zeta=self.zeta * factor)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.matrix.T


def inverse_sqrt(S: np.ndarray) -> np.ndarray | None:
    """Symmetric ``S^{-1/2}``, or None when ``S`` is numerically singular."""
    vals, vecs = np.linalg.eigh(S)
    top = vals.max() if vals.size else 0.0
    if not top > 0 or vals.min() <= SINGULAR_RTOL * top:
        return None
    return (vecs / np.sqrt(vals)) @ vecs.T


def regularized_covariance(points: np.ndarray, c_reg: float = 1.0) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    S = np.atleast_2d(np.cov(X, rowvar=False))
    return S + c_reg * np.diag(np.diag(S))


def compute_transform(points: np.ndarray, M: float, c_reg: float = 1.0) -> TransformH | None:
    """Transform for the pooled forward+backward endpoints at ``t*``.

    ``M`` is the per-direction pool size.  Returns None (the singular flag) if
    the regularized covariance is not positive definite, e.g. when some
    coordinate is constant across the cloud; callers then stay with exact
    matching.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        return None
    W = inverse_sqrt(regularized_covariance(X, c_reg))
    if W is None:
        return None
    return TransformH(whitening=W, alpha=transform_alpha(M, X.shape[1]))
