"""Kernel-weighted bridge expectations and the adaptive sample-size loop.

For an interval ``[s, t]`` with observed ends ``x(s)`` and ``x(t)``, forward
paths run from ``x(s)`` on ``[s, t*]`` and reverse paths from ``x(t)`` for
``t - t*``.  Pairs whose ends meet at ``t*`` (exactly or under a kernel) are
bridges; the weighted average of ``R^(f) + R^(b)`` and ``F^(f) + F^(b)`` over
pairs estimates ``E[R_j | bridge]`` and ``E[F_j | bridge]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import rng as rngmod
from ..model import SRNModel, as_theta
from ..ssa import simulate_endpoints
from .join import EndpointCloud, JoinResult, join_clouds
from .kernels import EPANECHNIKOV, KRONECKER, Kernel
from .transform import compute_transform


class NoBridgeError(RuntimeError):
    """No forward/backward pair was joined, so the ratio estimator is undefined."""


@dataclass(frozen=True)
class BridgeConfig:
    M0: int = 100
    cv0: float = 0.1
    gamma: float = 0.05
    C_L: float = 2.0
    c_reg: float = 1.0
    max_rounds: int = 8
    t_star_frac: float = 0.5
    n_boot: int = 200
    boot_min_pairs: int = 30
    zeta_factor: float = 1.5
    max_zeta_steps: int = 40

    def __post_init__(self):
        if self.M0 < 1 or self.max_rounds < 1:
            raise ValueError("M0 and max_rounds must be positive")
        if not 0 < self.t_star_frac < 1:
            raise ValueError(f"t_star_frac must lie in (0, 1), got {self.t_star_frac}")
        for name in ("cv0", "gamma", "C_L", "zeta_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c_reg < 0:
            raise ValueError("c_reg must be non-negative")


@dataclass
class BridgeEstimate:
    avg_R: np.ndarray
    avg_F: np.ndarray
    denominator: float
    M_used: int
    L: int
    cv: np.ndarray  # per statistic (R then F); nan where the mean is zero
    se_R: np.ndarray
    se_F: np.ndarray
    kernel: str = KRONECKER
    zeta: float = 1.0
    rounds: int = 1
    converged: bool = True
    log_shift: float = 0.0
    history: list[dict] = field(default_factory=list)


def weighted_averages(join: JoinResult) -> tuple[np.ndarray, np.ndarray, float]:
    """``(avg_R, avg_F, denominator)``; the denominator is in the join's shifted weight scale."""
    D = join.denominator
    if join.L == 0 or not D > 0:
        raise NoBridgeError("no joined forward-reverse pairs")
    avg = join.numerator() / D
    J = avg.shape[0] // 2
    return avg[:J], avg[J:], D


def weighted_moments(join: JoinResult) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and population variance of each pair statistic."""
    D = join.denominator
    if join.L == 0 or not D > 0:
        raise NoBridgeError("no joined forward-reverse pairs")
    mu = join.numerator() / D
    var = np.maximum(join.second_moment_sum() / D - mu * mu, 0.0)
    return mu, var


def ratio_standard_error(join: JoinResult) -> np.ndarray:
    """Delta-method standard error of each weighted average.

    Linearizes the ratio around its value ``r`` and keeps the first-order
    projections onto forward and backward paths, each of which includes the
    pair-level term once; this slightly overstates the variance.
    """
    mu, _ = weighted_moments(join)
    g_f = (join.V_f - mu) * join.S_f[:, None] + join.T_f
    g_b = (join.V_b - mu) * join.S_b[:, None] + join.T_b
    return np.sqrt((g_f ** 2).sum(axis=0) + (g_b ** 2).sum(axis=0)) / join.denominator


def coefficient_of_variation(join: JoinResult, rng: np.random.Generator | None = None,
                             n_boot: int = 200, min_pairs: int = 30) -> np.ndarray:
    """cv of every sample mean, ``L^{-1/2} sd / |mean|``; nan where the mean is zero.

    Below ``min_pairs`` joined pairs the cv comes from a bootstrap over pairs
    instead (needs ``join.pairs``).
    """
    mu, var = weighted_moments(join)
    if join.L < min_pairs:
        if join.pairs is None:
            raise ValueError("bootstrap cv needs the join's pair list")
        return _bootstrap_cv(join, rng if rng is not None else np.random.default_rng(0), n_boot)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.sqrt(var) / np.abs(mu) / math.sqrt(join.L)
    cv[mu == 0] = np.nan
    return cv


def _bootstrap_cv(join: JoinResult, rng: np.random.Generator, n_boot: int) -> np.ndarray:
    pf, pb, w = join.pairs
    V = join.V_f[pf] + join.V_b[pb]
    L = len(w)
    idx = rng.integers(0, L, size=(n_boot, L))
    W = w[idx]
    means = np.einsum("rl,rlc->rc", W, V[idx]) / W.sum(axis=1)[:, None]
    centre = means.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = means.std(axis=0, ddof=1) / np.abs(centre)
    cv[(centre == 0) | (V.mean(axis=0) == 0)] = np.nan
    return cv


def density_estimate(join: JoinResult) -> tuple[float, float]:
    """Transition density ``p(s, x, t, y)`` and its standard error from a join.

    With exact matching the mean pair weight ``kappa psi`` is unbiased for the
    density.  The error combines the forward and backward projections of the
    two-sample mean with its pair-level term.
    """
    Mf, Mb = join.n_f, join.n_b
    if Mf == 0 or Mb == 0:
        return 0.0, 0.0
    scale = math.exp(join.log_shift)
    p = join.denominator / (Mf * Mb)
    var = 0.0
    if Mf > 1:
        var += np.var(join.S_f / Mb, ddof=1) / Mf
    if Mb > 1:
        var += np.var(join.S_b / Mf, ddof=1) / Mb
    var += max(join.w2sum / (Mf * Mb) - p * p, 0.0) / (Mf * Mb)
    return p * scale, math.sqrt(var) * scale


def simulate_clouds(model: SRNModel, theta, interval, M: int, master_seed: int,
                    stream_id: tuple = (), t_star_frac: float = 0.5) -> tuple[EndpointCloud, EndpointCloud]:
    """``M`` forward paths from ``x(s)`` to ``t*`` and ``M`` reverse paths from ``x(t)``."""
    s, t, xs, xt = interval
    t_star = s + t_star_frac * (t - s)
    e, R, F, lp = simulate_endpoints(model, theta, xs, t_star - s, M,
                                     rngmod.stream(master_seed, rngmod.FORWARD, *stream_id))
    fwd = EndpointCloud(e, R, F, np.zeros(M))
    e, R, F, lp = simulate_endpoints(model, theta, xt, t - t_star, M,
                                     rngmod.stream(master_seed, rngmod.BACKWARD, *stream_id), reverse=True)
    return fwd, EndpointCloud(e, R, F, lp)


def forward_reverse_density(model: SRNModel, theta, interval, M: int, master_seed: int,
                            stream_id: tuple = (), t_star_frac: float = 0.5) -> tuple[float, float]:
    """Exact-match density estimate of ``p(s, x(s), t, x(t))`` with ``M`` paths per direction."""
    fwd, bwd = simulate_clouds(model, theta, interval, M, master_seed, stream_id, t_star_frac)
    return density_estimate(join_clouds(fwd, bwd, Kernel(KRONECKER)))


def _interval_parts(interval):
    s, t, xs, xt = interval
    s, t = float(s), float(t)
    if not t > s:
        raise ValueError(f"need s < t, got [{s}, {t}]")
    return s, t, np.asarray(xs, dtype=np.int64), np.asarray(xt, dtype=np.int64)


def _kernel_join(fwd, bwd, Mt, config) -> tuple[JoinResult, Kernel]:
    """Exact matching, or the whitened Epanechnikov join if exact pairs are too few."""
    kernel = Kernel(KRONECKER)
    join = join_clouds(fwd, bwd, kernel)
    if join.L >= math.ceil(config.gamma * Mt):
        return join, kernel
    H = compute_transform(np.vstack([fwd.endpoints, bwd.endpoints]), Mt, config.c_reg)
    if H is None:
        return join, kernel
    for _ in range(config.max_zeta_steps):
        kernel = Kernel(EPANECHNIKOV, H)
        join = join_clouds(fwd, bwd, kernel)
        if join.L <= config.C_L * Mt:
            break
        H = H.expanded(config.zeta_factor)
    return join, kernel


def adaptive_estimate(model: SRNModel, theta, interval, config: BridgeConfig = BridgeConfig(),
                      master_seed: int = 0, stream_id: tuple = ()) -> BridgeEstimate:
    """Bridge expectations for one interval, growing the path pools until the cvs settle.

    ``interval`` is ``(s, t, x(s), x(t))``.  Each round adds ``M`` fresh paths
    per direction to the pools (``M`` starts at ``M0`` and doubles), joins the
    pooled clouds and stops once every cv with a nonzero mean is below
    ``cv0``.  After ``max_rounds`` the last estimate is returned with
    ``converged=False``; if no pair was ever joined, :class:`NoBridgeError`.

    Random streams are keyed by ``(master_seed, direction, *stream_id, round)``.
    """
    theta = as_theta(theta, model)
    s, t, xs, xt = _interval_parts(interval)
    fwd = EndpointCloud.empty(model.d, model.J)
    bwd = EndpointCloud.empty(model.d, model.J)
    M = config.M0
    history = []
    join = None
    for rnd in range(config.max_rounds):
        f_new, b_new = simulate_clouds(model, theta, (s, t, xs, xt), M, master_seed,
                                       (*stream_id, rnd), config.t_star_frac)
        fwd, bwd = fwd.extend(f_new), bwd.extend(b_new)
        Mt = len(fwd)
        join, kernel = _kernel_join(fwd, bwd, Mt, config)
        kind = kernel.kind
        zeta = kernel.transform.zeta if kernel.transform is not None else 1.0
        cv = np.full(2 * model.J, np.inf)
        if join.L > 0:
            if join.L < config.boot_min_pairs:
                join = join_clouds(fwd, bwd, kernel, keep_pairs=True)
            boot = rngmod.stream(master_seed, rngmod.BOOTSTRAP, *stream_id, rnd)
            cv = coefficient_of_variation(join, boot, config.n_boot, config.boot_min_pairs)
        history.append({"round": rnd, "M": Mt, "L": join.L, "kernel": kind, "zeta": zeta})
        worst = np.nanmax(cv) if np.any(~np.isnan(cv)) else 0.0
        if join.L > 0 and worst < config.cv0:
            return _finish(join, cv, Mt, kind, zeta, rnd + 1, True, history)
        M *= 2
    if join is None or join.L == 0:
        raise NoBridgeError(f"no bridges after {config.max_rounds} rounds on [{s}, {t}]")
    return _finish(join, cv, Mt, kind, zeta, config.max_rounds, False, history)


def _finish(join, cv, Mt, kind, zeta, rounds, converged, history) -> BridgeEstimate:
    avg_R, avg_F, D = weighted_averages(join)
    se = ratio_standard_error(join)
    J = len(avg_R)
    return BridgeEstimate(avg_R=avg_R, avg_F=avg_F, denominator=D, M_used=Mt, L=join.L, cv=cv,
                          se_R=se[:J], se_F=se[J:], kernel=kind, zeta=zeta, rounds=rounds,
                          converged=converged, log_shift=join.log_shift, history=history)
