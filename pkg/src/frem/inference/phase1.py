"""Deterministic seeding: match forward and reverse mean field ODEs at ``t*``.

For each interval the forward ODE runs from ``x(s)`` to ``t*`` and the reverse
ODE from ``x(t)`` for ``t - t*``; a good parameter makes the two meet.  The
search is Nelder-Mead on ``log theta`` so iterates stay positive.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .. import _core
from ..model import SRNModel, as_theta
from .data import DataSet, Interval

GLOBAL = "global"
PER_INTERVAL = "per-interval"


class Phase1Warning(UserWarning):
    pass


@dataclass(frozen=True)
class Phase1Config:
    mode: str = PER_INTERVAL
    t_star_frac: float = 0.5
    ode_steps: int = 200  # RK4 steps per half interval, unless ode_dt is set
    ode_dt: float | None = None
    maxfev_per_param: int = 500
    xatol: float = 1e-8
    fatol: float = 1e-8
    floor: float = 1e-12
    log_step: float = 0.5  # initial simplex edge in log space

    def __post_init__(self):
        if self.mode not in (GLOBAL, PER_INTERVAL):
            raise ValueError(f"unknown phase I mode {self.mode!r}")
        if not 0 < self.t_star_frac < 1:
            raise ValueError("t_star_frac must lie in (0, 1)")
        if self.ode_steps < 1 or (self.ode_dt is not None and not self.ode_dt > 0):
            raise ValueError("ode_steps and ode_dt must be positive")

    def steps(self, span: float) -> int:
        if self.ode_dt is None:
            return self.ode_steps
        return max(1, math.ceil(span / self.ode_dt - 1e-9))


@dataclass
class Phase1Result:
    theta: np.ndarray
    objective: float
    seed_objective: float
    converged: bool
    nfev: int
    lambdas: list[np.ndarray] = field(default_factory=list)
    message: str = ""


class _Mismatch:
    """``Z_f(t*) - Z_b(t*)`` for a fixed list of intervals."""

    def __init__(self, model: SRNModel, intervals: list[Interval], config: Phase1Config):
        self.fwd = model.compiled.as_tuple()
        self.rev = model.reverse.compiled.as_tuple()
        self.items = []
        for iv in intervals:
            # spans depend on the length only, so equal intervals give equal gaps
            span = iv.t - iv.s
            left, right = config.t_star_frac * span, (1.0 - config.t_star_frac) * span
            nf, nb = config.steps(left), config.steps(right)
            self.items.append((np.asarray(iv.x_s, dtype=np.float64), left / nf, nf,
                               np.asarray(iv.x_t, dtype=np.float64), right / nb, nb))

    def gaps(self, theta: np.ndarray) -> list[np.ndarray]:
        out = []
        for zs, hf, nf, zt, hb, nb in self.items:
            zf = _core.rk4_final(zs, theta, hf, nf, *self.fwd)
            zb = _core.rk4_final(zt, theta, hb, nb, *self.rev)
            out.append(zf - zb)
        return out


def interval_weights(data: DataSet) -> np.ndarray:
    return 1.0 / data.lengths


def phase1_objective(model: SRNModel, data: DataSet, theta, weights=None,
                     config: Phase1Config = Phase1Config()) -> float:
    """``sum_k w_k ||Z_f(t*_k) - Z_b(t*_k)||^2``; weights default to ``1 / (t_k - s_k)``."""
    theta = as_theta(theta, model)
    w = interval_weights(data) if weights is None else np.asarray(weights, dtype=np.float64)
    gaps = _Mismatch(model, data.intervals, config).gaps(theta)
    return float(sum(wk * np.dot(g, g) for wk, g in zip(w, gaps)))


def _minimize_log(f, theta_seed: np.ndarray, config: Phase1Config):
    u0 = np.log(np.maximum(theta_seed, config.floor))
    J = len(u0)
    simplex = np.vstack([u0] + [u0 + config.log_step * np.eye(J)[i] for i in range(J)])

    def g(u):
        val = f(np.maximum(np.exp(u), config.floor))
        return val if np.isfinite(val) else np.inf

    res = minimize(g, u0, method="Nelder-Mead",
                   options={"maxfev": config.maxfev_per_param * J, "xatol": config.xatol,
                            "fatol": config.fatol, "initial_simplex": simplex})
    theta = np.maximum(np.exp(res.x), config.floor)
    return theta, float(res.fun), bool(res.success), int(res.nfev), str(res.message)


def _guarded(f, theta_seed, config):
    """Optimize, but never return something worse than the seed."""
    seed_val = f(np.maximum(theta_seed, config.floor))
    theta, val, ok, nfev, msg = _minimize_log(f, theta_seed, config)
    if not val <= seed_val:
        theta, val = np.maximum(theta_seed, config.floor), seed_val
    return theta, val, seed_val, ok, nfev, msg


def phase1_global(model: SRNModel, data: DataSet, theta_seed, weights=None,
                  config: Phase1Config = Phase1Config()) -> Phase1Result:
    theta_seed = as_theta(theta_seed, model)
    w = interval_weights(data) if weights is None else np.asarray(weights, dtype=np.float64)
    mm = _Mismatch(model, data.intervals, config)

    def f(theta):
        return float(sum(wk * np.dot(g, g) for wk, g in zip(w, mm.gaps(theta))))

    theta, val, seed_val, ok, nfev, msg = _guarded(f, theta_seed, config)
    if not ok:
        warnings.warn(f"phase I did not converge: {msg}", Phase1Warning, stacklevel=2)
    return Phase1Result(theta, val, seed_val, ok, nfev, message=msg)


def phase1_per_interval(model: SRNModel, data: DataSet, theta_seed,
                        config: Phase1Config = Phase1Config()) -> Phase1Result:
    """One fit per interval from the common seed, then the ``1/(t-s)``-weighted mean.

    Each interval minimizes the unweighted gap norm.  The reported objective
    is the global weighted objective at the averaged parameter.  Repeated
    intervals share one fit, since the search is deterministic.
    """
    theta_seed = as_theta(theta_seed, model)
    lambdas, all_ok, nfev, msgs = [], True, 0, []
    fits = {}
    for iv in data.intervals:
        key = (iv.t - iv.s, iv.x_s, iv.x_t)
        if key in fits:
            lambdas.append(fits[key])
            continue
        mm = _Mismatch(model, [iv], config)

        def f(theta):
            return float(np.linalg.norm(mm.gaps(theta)[0]))

        lam, _, _, ok, n, msg = _guarded(f, theta_seed, config)
        fits[key] = lam
        lambdas.append(lam)
        all_ok &= ok
        nfev += n
        if not ok:
            msgs.append(msg)
    w = interval_weights(data)
    theta = np.sum(w[:, None] * np.array(lambdas), axis=0) / w.sum()
    if not all_ok:
        warnings.warn(f"phase I did not converge on {len(msgs)} interval(s)", Phase1Warning, stacklevel=2)
    return Phase1Result(theta, phase1_objective(model, data, theta, config=config),
                        phase1_objective(model, data, theta_seed, config=config),
                        all_ok, nfev, lambdas, "; ".join(sorted(set(msgs))))


def run_phase1(model: SRNModel, data: DataSet, theta_seed, config: Phase1Config = Phase1Config()) -> Phase1Result:
    if config.mode == GLOBAL:
        return phase1_global(model, data, theta_seed, config=config)
    return phase1_per_interval(model, data, theta_seed, config)


def decay_analytic_optimum(x_s: float, x_t: float, duration: float) -> float:
    """Rate for which single-channel pure decay ODEs meet at the midpoint.

    Forward ``x_s e^{-c h}`` equals reverse ``(x_t + 1) e^{c h} - 1`` with
    ``h = duration / 2``: ``x_s q^2 + q - (x_t + 1) = 0`` for ``q = e^{-c h}``.
    """
    q = (-1.0 + math.sqrt(1.0 + 4.0 * x_s * (x_t + 1.0))) / (2.0 * x_s)
    return -math.log(q) / (duration / 2)
