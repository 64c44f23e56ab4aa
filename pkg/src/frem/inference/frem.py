"""Two-phase inference: ODE-matched seeds, then Monte Carlo EM on several chains.

Each chain starts from one user seed, is mapped through Phase I, then
iterates ``theta <- sum_k E[R | bridge_k] / sum_k E[F | bridge_k]`` with the
bridge expectations from :func:`frem.bridge.adaptive_estimate`.  Chains stop
together once the per-coordinate R-hat and the relative moving-average
statistic are both below their thresholds.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..bridge.estimator import BridgeConfig, NoBridgeError, adaptive_estimate
from ..model import SRNModel, as_theta
from .data import DataSet
from .diagnostics import relative_moving_avg_stat, rhat_per_coordinate
from .em import DegenerateDataError, em_update
from .phase1 import Phase1Config, run_phase1

log = logging.getLogger(__name__)

Estimator = Callable[..., object]


class FREMFailure(RuntimeError):
    """Fewer than two chains survived; ``report`` holds what was known at that point."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FREMConfig:
    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    phase1: Phase1Config = field(default_factory=Phase1Config)
    run_phase1: bool = True
    rhat_threshold: float = 1.4
    ma_order: int = 3
    ma_tol: float = 0.05
    max_iter: int = 300
    # a chain is dropped once more than fail_frac of its intervals fail
    # on fail_patience consecutive iterations
    fail_frac: float = 0.5
    fail_patience: int = 3

    def __post_init__(self):
        if self.max_iter < 1 or self.ma_order < 1 or self.fail_patience < 1:
            raise ValueError("max_iter, ma_order and fail_patience must be positive")
        for name in ("rhat_threshold", "ma_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.fail_frac < 1:
            raise ValueError("fail_frac must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FREMConfig":
        d = dict(d)
        bridge = BridgeConfig(**d.pop("bridge", {}))
        phase1 = Phase1Config(**d.pop("phase1", {}))
        return cls(bridge=bridge, phase1=phase1, **d)


@dataclass
class ChainState:
    index: int
    seed: np.ndarray
    phase1_theta: np.ndarray
    trace: list[np.ndarray]
    alive: bool = True
    fail_streak: int = 0
    flagged_at: int | None = None


@dataclass
class FREMResult:
    theta: np.ndarray  # cluster average of the surviving chains' final iterates
    chains: list[ChainState]
    p_star: int
    converged: bool
    rhat_trace: list[np.ndarray]
    ma_trace: list[np.ndarray]
    iterations: list[dict]
    master_seed: int
    config: FREMConfig

    @property
    def alive(self) -> list[ChainState]:
        return [c for c in self.chains if c.alive]

    def to_dict(self) -> dict:
        def arr(a):
            return [None if not math.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]

        return {
            "master_seed": int(self.master_seed),
            "config": self.config.to_dict(),
            "converged": bool(self.converged),
            # moving averages are gated on traces divided by the cluster average
            "ma_normalization": "relative",
            "p_star": int(self.p_star),
            "cluster_average": arr(self.theta),
            "chains": [{
                "index": c.index,
                "seed": arr(c.seed),
                "phase1": arr(c.phase1_theta),
                "final": arr(c.trace[-1]),
                "alive": c.alive,
                "flagged_at": c.flagged_at,
                "trace": [arr(t) for t in c.trace],
            } for c in self.chains],
            "rhat": [arr(r) for r in self.rhat_trace],
            "ma": [arr(m) for m in self.ma_trace],
            "iterations": self.iterations,
        }


def _chain_step(model, theta, data, config, master_seed, chain, it, estimator):
    """One EM update; returns ``(new_theta or None, diagnostics)``."""
    J = model.J
    sum_R, sum_F = np.zeros(J), np.zeros(J)
    failed, unconverged, M_used, L = [], 0, 0, 0
    for k, iv in enumerate(data.intervals):
        try:
            est = estimator(model, theta, iv, config.bridge, master_seed=master_seed, stream_id=(chain, k, it))
        except NoBridgeError:
            failed.append(k)
            continue
        sum_R += est.avg_R
        sum_F += est.avg_F
        M_used += int(est.M_used)
        L += int(est.L)
        unconverged += not est.converged
    diag = {"chain": chain, "failed": failed, "unconverged": unconverged, "M_used": M_used, "L": L}
    if failed:
        log.warning("chain %d iteration %d: dropped %d interval(s) without bridges", chain, it, len(failed))
    if len(failed) == len(data):
        return None, diag
    try:
        return em_update(sum_R, sum_F), diag
    except DegenerateDataError as exc:
        diag["degenerate"] = str(exc)
        return None, diag


def _stop_stats(chains, config):
    traces = np.array([c.trace for c in chains if c.alive])
    rh = rhat_per_coordinate(traces)
    ma = relative_moving_avg_stat(traces, config.ma_order)
    return rh, ma


def _rhat_growing(rhat_trace, window: int = 10) -> bool:
    """Max R-hat never fell over the last ``window`` diagnostics."""
    tops = [np.nanmax(r) for r in rhat_trace[-window:] if np.any(np.isfinite(r))]
    return len(tops) >= 2 and all(b >= a for a, b in zip(tops, tops[1:]))


def frem_run(model: SRNModel, data: DataSet, seeds: Sequence, config: FREMConfig = FREMConfig(),
             master_seed: int = 0, estimator: Estimator | None = None) -> FREMResult:
    """Run ``len(seeds)`` chains to joint convergence.

    The trace of each chain starts with its Phase I output (or the seed itself
    with ``run_phase1=False``).  A chain whose update fails keeps its previous
    parameter for that iteration.  ``estimator`` defaults to
    :func:`adaptive_estimate` and is swappable for testing.
    """
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    if len(data) == 0:
        raise ValueError("no observation intervals")
    estimator = estimator or adaptive_estimate
    chains = []
    for i, seed in enumerate(seeds):
        seed = as_theta(seed, model)
        theta0 = run_phase1(model, data, seed, config.phase1).theta if config.run_phase1 else seed.copy()
        chains.append(ChainState(i, seed, theta0.copy(), [theta0.copy()]))

    rhat_trace, ma_trace, iterations = [], [], []
    converged = False
    need = max(2, config.ma_order + 1)
    for it in range(config.max_iter):
        step = {"iteration": it + 1, "chains": []}
        for c in chains:
            if not c.alive:
                continue
            new, diag = _chain_step(model, c.trace[-1], data, config, master_seed, c.index, it, estimator)
            step["chains"].append(diag)
            if new is None or len(diag["failed"]) > config.fail_frac * len(data):
                c.fail_streak += 1
            else:
                c.fail_streak = 0
            c.trace.append(c.trace[-1].copy() if new is None else new)
            if c.fail_streak >= config.fail_patience:
                c.alive, c.flagged_at = False, it + 1
                log.warning("chain %d flagged after %d failing iterations", c.index, c.fail_streak)
        iterations.append(step)
        survivors = [c for c in chains if c.alive]
        if len(survivors) < 2:
            partial = FREMResult(np.mean([c.trace[-1] for c in chains], axis=0), chains, it + 1, False,
                                 rhat_trace, ma_trace, iterations, master_seed, config)
            raise FREMFailure(f"only {len(survivors)} chain(s) survived at iteration {it + 1}",
                              partial.to_dict())
        if len(survivors[0].trace) < need:
            continue
        rh, ma = _stop_stats(chains, config)
        rhat_trace.append(rh)
        ma_trace.append(ma)
        rh_ok = bool(np.all(np.isnan(rh)) or np.nanmax(rh) < config.rhat_threshold)
        if rh_ok and np.max(ma) < config.ma_tol:
            converged = True
            break
    p_star = len(iterations)
    if not converged:
        warnings.warn(f"no convergence after {p_star} iterations", ConvergenceWarning, stacklevel=2)
        if _rhat_growing(rhat_trace):
            warnings.warn("R-hat did not decrease; chains may sit in different basins",
                          ConvergenceWarning, stacklevel=2)
    alive = [c for c in chains if c.alive]
    theta = np.mean([c.trace[-1] for c in alive], axis=0)
    return FREMResult(theta, chains, p_star, converged, rhat_trace, ma_trace, iterations, master_seed, config)


@dataclass
class EnsembleSummary:
    mean: np.ndarray
    ci_half: np.ndarray  # half-width of the normal 95% interval for the mean
    min: np.ndarray
    max: np.ndarray
    estimates: np.ndarray  # (n_ok, J)
    master_seeds: list[int]
    failures: list[dict]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "ci_half": self.ci_half.tolist(),
            "min": self.min.tolist(),
            "max": self.max.tolist(),
            "estimates": self.estimates.tolist(),
            "master_seeds": self.master_seeds,
            "failures": self.failures,
        }


def ensemble_run(model: SRNModel, data: DataSet, seeds: Sequence, config: FREMConfig = FREMConfig(),
                 n_runs: int = 30, base_seed: int = 0, estimator: Estimator | None = None) -> EnsembleSummary:
    """Repeat :func:`frem_run` with master seeds ``base_seed + r``."""
    if n_runs < 1:
        raise ValueError("n_runs must be positive")
    ests, ok_seeds, failures = [], [], []
    for r in range(n_runs):
        ms = base_seed + r
        try:
            res = frem_run(model, data, seeds, config, ms, estimator)
        except FREMFailure as exc:
            failures.append({"master_seed": ms, "error": str(exc)})
            continue
        ests.append(res.theta)
        ok_seeds.append(ms)
        if not res.converged:
            failures.append({"master_seed": ms, "error": "not converged", "kept": True})
    J = model.J
    if not ests:
        nan = np.full(J, np.nan)
        return EnsembleSummary(nan, nan, nan, nan, np.empty((0, J)), [], failures)
    E = np.array(ests)
    n = len(E)
    half = 1.96 * E.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(J)
    return EnsembleSummary(E.mean(axis=0), half, E.min(axis=0), E.max(axis=0), E, ok_seeds, failures)
