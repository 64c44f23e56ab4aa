"""Reaction-rate (mean field) ODEs integrated with fixed-step RK4.

Monomials are evaluated on real states by direct substitution, with sharp
guard indicators, and negative components are clamped after every step.
"""
from __future__ import annotations

import math

import numpy as np

from . import _core
from .model import SRNModel, as_theta


def _steps(t0: float, t1: float, dt: float | None) -> tuple[int, float]:
    span = float(t1) - float(t0)
    if span < 0:
        raise ValueError(f"need t0 <= t1, got [{t0}, {t1}]")
    if span == 0:
        return 0, 0.0
    if dt is None:
        dt = span / 200
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = max(1, math.ceil(span / dt - 1e-9))
    return n, span / n


def _integrate(model: SRNModel, theta, z0, t0, t1, dt, final_only):
    theta = as_theta(theta, model)
    z0 = np.asarray(z0, dtype=np.float64).reshape(model.d)
    if np.any(z0 < 0):
        raise ValueError("initial state must be non-negative")
    n, h = _steps(t0, t1, dt)
    cm = model.compiled.as_tuple()
    if final_only:
        return _core.rk4_final(z0, theta, h, n, *cm)
    traj = _core.rk4_path(z0, theta, h, n, *cm)
    times = float(t0) + h * np.arange(n + 1)
    if n:
        times[-1] = float(t1)
    return times, traj


def ode_mean_field(model: SRNModel, theta, z0, t0: float, t1: float, dt: float | None = None):
    """``(times, Z)`` for ``dZ/dt = sum_j nu_j a_j(Z)``; ``dt`` defaults to ``(t1 - t0) / 200``.

    The step is shrunk slightly if needed so the grid lands exactly on ``t1``.
    """
    return _integrate(model, theta, z0, t0, t1, dt, final_only=False)


def ode_reverse_mean_field(model: SRNModel, theta, z0, t0: float, t1: float, dt: float | None = None):
    """Mean field ODE of the reverse network, started at ``z0`` and run for ``t1 - t0``."""
    return _integrate(model.reverse, theta, z0, t0, t1, dt, final_only=False)


def ode_final(model: SRNModel, theta, z0, duration: float, dt: float | None = None,
              reverse: bool = False) -> np.ndarray:
    """End state only; the hot path of Phase I."""
    m = model.reverse if reverse else model
    return _integrate(m, theta, z0, 0.0, duration, dt, final_only=True)
