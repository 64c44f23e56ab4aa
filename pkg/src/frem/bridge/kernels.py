"""Joining kernels: exact lattice matches and the product Epanechnikov kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transform import TransformH

KRONECKER = "kronecker"
EPANECHNIKOV = "epanechnikov"


@dataclass(frozen=True)
class Kernel:
    kind: str = KRONECKER
    transform: TransformH | None = None

    def __post_init__(self):
        if self.kind not in (KRONECKER, EPANECHNIKOV):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def coordinates(self, X: np.ndarray) -> np.ndarray:
        """Points in the space where the kernel is evaluated."""
        if self.kind == KRONECKER or self.transform is None:
            return np.asarray(X)
        return self.transform.apply(X)


def epanechnikov(eta: np.ndarray) -> np.ndarray:
    """``(3/4)^d prod_i (1 - eta_i^2) 1{|eta_i| <= 1}`` along the last axis."""
    eta = np.asarray(eta, dtype=np.float64)
    d = eta.shape[-1]
    w = np.prod(np.clip(1.0 - eta * eta, 0.0, None), axis=-1)
    return 0.75 ** d * w


def kernel_eval(kernel: Kernel, yf, yb) -> float:
    """Weight of a forward/backward pair, given points already in kernel coordinates."""
    yf = np.asarray(yf)
    yb = np.asarray(yb)
    if yf.shape != yb.shape:
        raise ValueError(f"dimension mismatch: {yf.shape} vs {yb.shape}")
    if kernel.kind == KRONECKER:
        return float(np.array_equal(yf, yb))
    return float(epanechnikov(yf.astype(np.float64) - yb.astype(np.float64)))
