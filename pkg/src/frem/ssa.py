"""Exact path simulation (Gillespie SSA) for forward and reverse networks.

Single-path functions return the full :class:`JumpPath`; the batched
:func:`simulate_endpoints` keeps only what the bridge estimator needs (end
state, R, F, log psi) and runs in a jitted loop.  Both consume the random
stream identically, so for the same generator they produce the same path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _core
from .model import SRNModel, as_theta


@dataclass
class JumpPath:
    """Piecewise-constant trajectory: ``states[i]`` holds on ``[jump_times[i-1], jump_times[i])``."""

    t0: float
    t1: float
    jump_times: np.ndarray
    states: np.ndarray  # (n_jumps + 1, d)
    channel_ids: np.ndarray

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def end_state(self) -> np.ndarray:
        return self.states[-1]

    def holding_times(self) -> np.ndarray:
        edges = np.concatenate(([self.t0], self.jump_times, [self.t1]))
        return np.diff(edges)

    def state_at(self, t: float | np.ndarray) -> np.ndarray:
        """State in force at time(s) ``t`` (right-continuous)."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self.states[idx]


@dataclass
class PathStats:
    R: np.ndarray  # firing counts per channel
    F: np.ndarray  # integral of g_j along the path
    log_psi: float = 0.0


def path_statistics(model: SRNModel, path: JumpPath) -> PathStats:
    """Closed-form R and F recomputed from a stored forward-clock path."""
    R = np.bincount(np.asarray(path.channel_ids, dtype=np.int64), minlength=model.J)
    dts = path.holding_times()
    F = np.zeros(model.J)
    for x, dt in zip(path.states, dts):
        for j, ch in enumerate(model.channels):
            F[j] += ch.monomial(x) * dt
    return PathStats(R=R, F=F)


def _simulate(driver: SRNModel, forward: SRNModel, theta, x0, t0, t1, rng, with_psi):
    x = [int(v) for v in x0]
    duration = t1 - t0
    J = driver.J
    times, states, chans = [], [list(x)], []
    R = np.zeros(J, dtype=np.int64)
    F = np.zeros(J)
    log_psi = 0.0
    t = 0.0
    while True:
        a = [theta[j] * driver.channels[j].monomial(x) for j in range(J)]
        a0 = 0.0
        for v in a:
            a0 += v
        g = [forward.channels[j].monomial(x) for j in range(J)]
        fwd0 = 0.0
        for j in range(J):
            fwd0 += theta[j] * g[j]
        u1, tau = 0.0, math.inf
        if a0 > 0.0:
            u1 = rng.random()
            tau = -math.log(1.0 - rng.random()) / a0
        done = t + tau >= duration
        dt = duration - t if done else tau
        for j in range(J):
            F[j] += g[j] * dt
        if with_psi:
            log_psi += (a0 - fwd0) * dt
        if done:
            break
        t += tau
        target, acc, sel = u1 * a0, 0.0, J - 1
        for j in range(J):
            acc += a[j]
            if acc > target:
                sel = j
                break
        while a[sel] == 0.0:
            sel -= 1
        x = [xi + vi for xi, vi in zip(x, driver.channels[sel].stoich)]
        R[sel] += 1
        times.append(t0 + t)
        states.append(list(x))
        chans.append(sel)
    path = JumpPath(
        t0=t0, t1=t1,
        jump_times=np.array(times, dtype=np.float64),
        states=np.array(states, dtype=np.int64).reshape(-1, driver.d),
        channel_ids=np.array(chans, dtype=np.int64),
    )
    return path, PathStats(R=R, F=F, log_psi=log_psi)


def ssa_forward(model: SRNModel, theta, x0, t0: float, t1: float,
                rng: np.random.Generator) -> tuple[JumpPath, PathStats]:
    if not t1 > t0:
        raise ValueError(f"need t0 < t1, got [{t0}, {t1}]")
    theta = as_theta(theta, model)
    return _simulate(model, model, theta, x0, t0, t1, rng, with_psi=False)


def ssa_reverse(model: SRNModel, theta, y, t_star: float, t1: float,
                rng: np.random.Generator) -> tuple[JumpPath, PathStats]:
    """Reverse process started at ``y`` and run for ``t1 - t_star``.

    The path is in the reverse clock (states of Y, reverse channel ids).  R and
    F are the bridge-interval statistics of the time-reversed path, whose
    state on each holding interval is the same as Y's; ``log_psi`` is the
    exact integral of ``c(Y)``.
    """
    if t1 < t_star:
        raise ValueError(f"need t_star <= t1, got [{t_star}, {t1}]")
    theta = as_theta(theta, model)
    if t1 == t_star:
        z = np.array([y], dtype=np.int64).reshape(1, model.d)
        path = JumpPath(t_star, t1, np.empty(0), z, np.empty(0, dtype=np.int64))
        return path, PathStats(np.zeros(model.J, dtype=np.int64), np.zeros(model.J), 0.0)
    return _simulate(model.reverse, model, theta, y, t_star, t1, rng, with_psi=True)


def to_forward_clock(model: SRNModel, path: JumpPath) -> JumpPath:
    """Map a reverse-clock path of Y onto ``X_b(u) = Y(t_star + t - u)``."""
    u = (path.t0 + path.t1) - path.jump_times[::-1]
    return JumpPath(path.t0, path.t1, u, path.states[::-1].copy(), path.channel_ids[::-1].copy())


def simulate_endpoints(model: SRNModel, theta, start, duration: float, n_paths: int,
                       rng: np.random.Generator, reverse: bool = False):
    """Batched paths from a common start: ``(ends, R, F, log_psi)`` arrays.

    ``reverse=True`` simulates the reverse network with the bridge statistics
    described in :func:`ssa_reverse`.
    """
    theta = as_theta(theta, model)
    start = np.asarray(start, dtype=np.int64).reshape(model.d)
    fwd = model.compiled.as_tuple()
    drv = model.reverse.compiled.as_tuple() if reverse else fwd
    if duration <= 0 or n_paths == 0:
        ends = np.tile(start, (n_paths, 1))
        return (ends, np.zeros((n_paths, model.J), dtype=np.int64),
                np.zeros((n_paths, model.J)), np.zeros(n_paths))
    return _core.ssa_batch(start, float(duration), int(n_paths), theta, rng, reverse, *drv, *fwd)


def sample_observations(model: SRNModel, theta, x0, epochs: Sequence[float],
                        rng: np.random.Generator) -> np.ndarray:
    """One SSA path observed at ``epochs`` (first epoch is the start time)."""
    epochs = np.asarray(epochs, dtype=np.float64)
    if len(epochs) < 2:
        return np.asarray(x0, dtype=np.int64).reshape(1, -1)
    path, _ = ssa_forward(model, theta, x0, float(epochs[0]), float(epochs[-1]), rng)
    return path.state_at(epochs)
