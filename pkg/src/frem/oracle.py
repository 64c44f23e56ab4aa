"""Master-equation ground truth on a truncated state space.

The lattice is cut to a box; jumps leaving the box go to one absorbing sink
state, so the generator stays conservative and the sink mass measures the
truncation error.  Matrix exponential actions use uniformization, and bridge
moments are time integrals evaluated by Gauss-Legendre quadrature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .model import SRNModel, as_theta, monomials

SINK_WARN = 1e-6
MIN_BRIDGE_PROB = 1e-300


class TruncationWarning(UserWarning):
    pass


class UnsupportedBridgeError(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedStateSpace:
    lo: tuple[int, ...]
    hi: tuple[int, ...]  # inclusive

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(h < l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"bad box bounds {self.lo}..{self.hi}")
        if min(self.lo) < 0:
            raise ValueError("box must lie in the non-negative orthant")

    @classmethod
    def from_bounds(cls, bounds) -> "TruncatedStateSpace":
        """From ``[(lo, hi), ...]`` per species."""
        return cls(tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @property
    def d(self) -> int:
        return len(self.lo)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def sink(self) -> int:
        return self.size

    @cached_property
    def states(self) -> np.ndarray:
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids + np.array(self.lo)

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= np.array(self.lo)) & (X <= np.array(self.hi)), axis=1)

    def index(self, X) -> np.ndarray:
        """Linear index of each row of ``X``; the sink index where outside the box."""
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        inside = self.contains(X)
        lin = np.ravel_multi_index(tuple((np.clip(X, self.lo, self.hi) - np.array(self.lo)).T), self.shape)
        return np.where(inside, lin, self.sink)

    def index_of(self, x) -> int:
        i = int(self.index(x)[0])
        if i == self.sink:
            raise ValueError(f"state {list(x)} lies outside the box {self.lo}..{self.hi}")
        return i


def generator_matrix(model: SRNModel, theta, box: TruncatedStateSpace) -> sparse.csr_matrix:
    """Rate matrix over the box states plus a final absorbing sink row/column."""
    theta = as_theta(theta, model)
    X = box.states
    A = monomials(model, X) * theta
    n = box.size
    rows, cols, vals = [], [], []
    for j in range(model.J):
        a = A[:, j]
        live = a > 0
        src = np.nonzero(live)[0]
        rows.append(src)
        cols.append(box.index(X[live] + model.stoich[j]))
        vals.append(a[live])
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(-A.sum(axis=1))
    Q = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n + 1, n + 1))
    return Q.tocsr()


def _expm_action(Q: sparse.csr_matrix, v: np.ndarray, t: float, tol: float, left: bool) -> np.ndarray:
    """``v e^{Qt}`` (left) or ``e^{Qt} v`` by uniformization with Poisson tail below ``tol``."""
    if t == 0:
        return v.copy()
    lam = float(np.max(-Q.diagonal()))
    if lam <= 0:
        return v.copy()
    lam *= 1.0 + 1e-12
    P = sparse.identity(Q.shape[0], format="csr") + Q / lam
    if left:
        P = P.T.tocsr()
    mu = lam * t
    out = np.zeros_like(v)
    term = v.copy()
    acc = 0.0
    k = 0
    while True:
        w = math.exp(-mu + k * math.log(mu) - math.lgamma(k + 1))
        out += w * term
        acc += w
        if acc >= 1.0 - tol and k >= mu:
            break
        term = P @ term
        k += 1
        if k > mu + 50.0 * math.sqrt(mu) + 1000:
            break
    return out


@dataclass
class TransitionResult:
    p: float
    sink_mass: float


def _row(box, x):
    v = np.zeros(box.size + 1)
    v[box.index_of(x)] = 1.0
    return v


def _check_sink(sink_mass: float):
    if sink_mass > SINK_WARN:
        warnings.warn(f"truncation sink holds {sink_mass:.3g} of the mass; enlarge the box",
                      TruncationWarning, stacklevel=3)


def transition_distribution(model: SRNModel, theta, box: TruncatedStateSpace, x, s: float, t: float,
                            tol: float = 1e-10) -> np.ndarray:
    """Row ``p(s, x, t, .)`` over box states, with the sink mass as the last entry."""
    if t < s:
        raise ValueError(f"need s <= t, got [{s}, {t}]")
    Q = generator_matrix(model, theta, box)
    return _expm_action(Q, _row(box, x), t - s, tol, left=True)


def transition_prob(model: SRNModel, theta, box: TruncatedStateSpace, x, s: float, y, t: float,
                    tol: float = 1e-10) -> TransitionResult:
    dist = transition_distribution(model, theta, box, x, s, t, tol)
    sink = float(dist[-1])
    _check_sink(sink)
    return TransitionResult(p=float(dist[box.index_of(y)]), sink_mass=sink)


@dataclass
class BridgeMoments:
    R: np.ndarray  # E[R_j | X(s)=x, X(t)=y]
    F: np.ndarray  # E[F_j | X(s)=x, X(t)=y]
    p: float
    sink_mass: float


def bridge_expectations(model: SRNModel, theta, box: TruncatedStateSpace, x, s: float, y, t: float,
                        n_quad: int = 64, tol: float = 1e-12) -> BridgeMoments:
    """Exact conditional firing counts and monomial integrals of the bridge ``x -> y``.

    ``E[R_j] = p^{-1} int sum_z pi_u(z) a_j(z) beta_u(z + nu_j) du`` and
    ``E[F_j] = p^{-1} int sum_z pi_u(z) g_j(z) beta_u(z) du`` with
    ``pi_u = p(s, x, u, .)`` and ``beta_u = p(u, ., t, y)``.
    """
    theta = as_theta(theta, model)
    if not t > s:
        raise ValueError(f"need s < t, got [{s}, {t}]")
    Q = generator_matrix(model, theta, box)
    ix, iy = box.index_of(x), box.index_of(y)
    start = _row(box, x)
    end = np.zeros(box.size + 1)
    end[iy] = 1.0
    full = _expm_action(Q, start, t - s, tol, left=True)
    p = float(full[iy])
    _check_sink(float(full[-1]))
    if p < MIN_BRIDGE_PROB:
        raise UnsupportedBridgeError(f"p(s, x, t, y) = {p:.3g} is too small to condition on")
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    u = s + 0.5 * (t - s) * (nodes + 1.0)
    weights = 0.5 * (t - s) * weights
    G = monomials(model, box.states)
    A = G * theta
    shifted = [box.index(box.states + model.stoich[j]) for j in range(model.J)]
    # propagate pi forward through increasing nodes and beta backward through decreasing ones
    pis = np.empty((n_quad, box.size + 1))
    cur, prev = start, s
    for q in range(n_quad):
        cur = _expm_action(Q, cur, u[q] - prev, tol, left=True)
        pis[q], prev = cur, u[q]
    betas = np.empty((n_quad, box.size + 1))
    cur, prev = end, t
    for q in range(n_quad - 1, -1, -1):
        cur = _expm_action(Q, cur, prev - u[q], tol, left=False)
        betas[q], prev = cur, u[q]
    n = box.size
    ER = np.zeros(model.J)
    EF = np.zeros(model.J)
    for j in range(model.J):
        ER[j] = np.dot(weights, np.einsum("qz,z,qz->q", pis[:, :n], A[:, j], betas[:, shifted[j]]))
        EF[j] = np.dot(weights, np.einsum("qz,z,qz->q", pis[:, :n], G[:, j], betas[:, :n]))
    return BridgeMoments(R=ER / p, F=EF / p, p=p, sink_mass=float(full[-1]))
