"""Pairing forward and backward endpoint clouds.

Every estimator in :mod:`frem.bridge.estimator` is a ratio of double sums over
all forward/backward pairs ``(m, m')`` with weight ``w = kappa(eta) psi(m')``.
The joins here never form the ``M_f x M_b`` matrix.  They return per-point
aggregates, which is all the ratio, its standard error and the density
estimate need:

``S_f[m] = sum_m' w``, ``S_b[m'] = sum_m w``,
``T_f[m] = sum_m' w V_b[m']`` and ``T_b[m'] = sum_m w V_f[m]``,

where ``V`` stacks the per-path statistics ``(R, F)``.

Exact matching groups both clouds by lattice state.  The smoothing kernel
buckets forward points into unit boxes and lets each backward point probe its
``3^d`` neighboring boxes; boxes are located by binary search on sorted
flattened box ids rather than a hash map.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .. import _core
from .kernels import EPANECHNIKOV, KRONECKER, Kernel, epanechnikov

# direct-addressed buckets when the padded box grid has at most this many cells per point
_DENSE_FACTOR = 8


@dataclass
class EndpointCloud:
    """End states at ``t*`` of a batch of paths, with their statistics."""

    endpoints: np.ndarray  # (M, d) int64
    R: np.ndarray  # (M, J)
    F: np.ndarray  # (M, J)
    log_psi: np.ndarray  # (M,), zero for forward paths

    def __len__(self) -> int:
        return self.endpoints.shape[0]

    @property
    def values(self) -> np.ndarray:
        """``(M, 2J)`` block ``[R | F]``."""
        return np.hstack([self.R.astype(np.float64), self.F])

    @classmethod
    def empty(cls, d: int, J: int) -> "EndpointCloud":
        return cls(np.empty((0, d), dtype=np.int64), np.empty((0, J), dtype=np.int64),
                   np.empty((0, J)), np.empty(0))

    def extend(self, other: "EndpointCloud") -> "EndpointCloud":
        return EndpointCloud(
            np.vstack([self.endpoints, other.endpoints]),
            np.vstack([self.R, other.R]),
            np.vstack([self.F, other.F]),
            np.concatenate([self.log_psi, other.log_psi]),
        )


@dataclass
class JoinResult:
    """Pair aggregates for one join.  Weights are ``kappa * exp(log_psi - log_shift)``."""

    L: int
    S_f: np.ndarray
    S_b: np.ndarray
    T_f: np.ndarray
    T_b: np.ndarray
    V_f: np.ndarray
    V_b: np.ndarray
    w2sum: float
    log_shift: float
    kind: str = KRONECKER
    pairs: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def n_f(self) -> int:
        return self.S_f.shape[0]

    @property
    def n_b(self) -> int:
        return self.S_b.shape[0]

    @property
    def denominator(self) -> float:
        return float(self.S_f.sum())

    def numerator(self) -> np.ndarray:
        """``sum_pairs w (V_f + V_b)`` per statistic."""
        return self.V_f.T @ self.S_f + self.V_b.T @ self.S_b

    def second_moment_sum(self) -> np.ndarray:
        """``sum_pairs w (V_f + V_b)^2`` per statistic."""
        return ((self.V_f ** 2).T @ self.S_f + 2.0 * np.einsum("mc,mc->c", self.V_f, self.T_f)
                + (self.V_b ** 2).T @ self.S_b)


def _psi_weights(log_psi: np.ndarray) -> tuple[np.ndarray, float]:
    log_psi = np.asarray(log_psi, dtype=np.float64)
    if log_psi.size == 0:
        return np.empty(0), 0.0
    shift = float(log_psi.max())
    return np.exp(log_psi - shift), shift


def _empty_result(Vf, Vb, shift, kind, keep_pairs) -> JoinResult:
    C = Vf.shape[1]
    pairs = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0)) if keep_pairs else None
    return JoinResult(0, np.zeros(len(Vf)), np.zeros(len(Vb)), np.zeros((len(Vf), C)),
                      np.zeros((len(Vb), C)), Vf, Vb, 0.0, shift, kind, pairs)


def _flat_keys(coords: list[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray | None]:
    """Mixed-radix flattening of integer coordinates sharing a bounding box.

    The box is padded by one cell on each side so neighbor ids never wrap.
    Returns one key array per input and the radix, or ``([], None)`` when the
    ids would not fit in int64 (the caller then takes a slower exact path).
    """
    allc = np.vstack(coords)
    lo = allc.min(axis=0) - 1
    ext = allc.max(axis=0) - lo + 2
    total = 1.0
    for e in ext:
        total *= float(e)
    if total >= 2.0 ** 62:
        return [], None
    radix = np.ones(len(ext), dtype=np.int64)
    for i in range(len(ext) - 2, -1, -1):
        radix[i] = radix[i + 1] * ext[i + 1]
    return [(c - lo) @ radix for c in coords], radix


def _group_ids(xf: np.ndarray, xb: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Common integer ids for identical lattice rows across both clouds."""
    keys, radix = _flat_keys([xf, xb])
    if radix is not None:
        allk = np.concatenate(keys)
        _, inv = np.unique(allk, return_inverse=True)
    else:
        _, inv = np.unique(np.vstack([xf, xb]), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv[: len(xf)], inv[len(xf):], int(inv.max()) + 1 if inv.size else 0


def kronecker_join(xf: np.ndarray, xb: np.ndarray, Vf: np.ndarray, Vb: np.ndarray,
                   log_psi_b: np.ndarray, keep_pairs: bool = False) -> JoinResult:
    """Exact-match join: ``kappa = 1`` iff the two lattice endpoints coincide."""
    xf = np.asarray(xf, dtype=np.int64)
    xb = np.asarray(xb, dtype=np.int64)
    psi, shift = _psi_weights(log_psi_b)
    if len(xf) == 0 or len(xb) == 0:
        return _empty_result(Vf, Vb, shift, KRONECKER, keep_pairs)
    gf, gb, G = _group_ids(xf, xb)
    cnt_f = np.bincount(gf, minlength=G).astype(np.float64)
    live_b = (psi > 0).astype(np.float64)
    psi_g = np.bincount(gb, weights=psi, minlength=G)
    C = Vf.shape[1]
    sumVf_g = np.stack([np.bincount(gf, weights=Vf[:, c], minlength=G) for c in range(C)], axis=1)
    psiVb_g = np.stack([np.bincount(gb, weights=psi * Vb[:, c], minlength=G) for c in range(C)], axis=1)
    S_f = psi_g[gf]
    S_b = psi * cnt_f[gb]
    T_f = psiVb_g[gf]
    T_b = psi[:, None] * sumVf_g[gb]
    L = int(np.dot(cnt_f, np.bincount(gb, weights=live_b, minlength=G)))
    w2sum = float(np.dot(cnt_f, np.bincount(gb, weights=psi * psi, minlength=G)))
    pairs = None
    if keep_pairs:
        pf, pb = _match_ranges(gf, gb, [0])
        keep = psi[pb] > 0
        pairs = (pf[keep], pb[keep], psi[pb[keep]])
    return JoinResult(L, S_f, S_b, T_f, T_b, Vf, Vb, w2sum, shift, KRONECKER, pairs)


def _match_ranges(key_f: np.ndarray, key_b: np.ndarray, offsets) -> tuple[np.ndarray, np.ndarray]:
    """All ``(m, m')`` with ``key_f[m] == key_b[m'] + o`` for some offset ``o``."""
    order = np.argsort(key_f, kind="stable")
    sk = key_f[order]
    pf_parts, pb_parts = [], []
    for o in offsets:
        q = key_b + o
        lo = np.searchsorted(sk, q, side="left")
        hi = np.searchsorted(sk, q, side="right")
        n = hi - lo
        hit = np.nonzero(n)[0]
        if hit.size == 0:
            continue
        n = n[hit]
        pb = np.repeat(hit, n)
        starts = np.repeat(lo[hit] - np.cumsum(n) + n, n)
        pf_parts.append(order[starts + np.arange(pb.size)])
        pb_parts.append(pb)
    if not pf_parts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(pf_parts), np.concatenate(pb_parts)


def box_join(yf: np.ndarray, yb: np.ndarray, Vf: np.ndarray, Vb: np.ndarray,
             log_psi_b: np.ndarray, keep_pairs: bool = False) -> JoinResult:
    """Epanechnikov join of points already in kernel coordinates.

    A pair can only have positive weight if every coordinate differs by less
    than one, i.e. if the unit boxes ``floor(y)`` of the two points are equal
    or adjacent, so only the ``3^d`` neighbor boxes of each backward point are
    searched.  Box ids index the buckets directly when the padded bounding
    box is small relative to the clouds, and are binary-searched otherwise.
    """
    yf = np.ascontiguousarray(yf, dtype=np.float64)
    yb = np.ascontiguousarray(yb, dtype=np.float64)
    Vf = np.ascontiguousarray(Vf, dtype=np.float64)
    Vb = np.ascontiguousarray(Vb, dtype=np.float64)
    psi, shift = _psi_weights(log_psi_b)
    Mf, Mb = len(yf), len(yb)
    if Mf == 0 or Mb == 0:
        return _empty_result(Vf, Vb, shift, EPANECHNIKOV, keep_pairs)
    d = yf.shape[1]
    bf = np.floor(yf).astype(np.int64)
    bb = np.floor(yb).astype(np.int64)
    keys, radix = _flat_keys([bf, bb])
    if radix is None:
        return _box_join_dict(yf, yb, bf, bb, psi, Vf, Vb, shift, keep_pairs)
    kf, kb = keys
    offsets = np.array([np.dot(o, radix) for o in itertools.product((-1, 0, 1), repeat=d)],
                       dtype=np.int64)
    n_ids = int(np.prod((np.vstack([bf, bb]).max(axis=0) - np.vstack([bf, bb]).min(axis=0) + 3)
                        .astype(np.float64)))
    dense = n_ids <= _DENSE_FACTOR * (Mf + Mb) + 4096
    uniq = np.array([n_ids], dtype=np.int64) if dense else np.unique(kf)
    L, S_f, S_b, T_f, T_b, w2, pf, pb, pw = _core.box_join_accumulate(
        yf, yb, kf, kb, offsets, uniq, dense, psi, Vf, Vb, keep_pairs)
    pairs = (pf, pb, pw) if keep_pairs else None
    return JoinResult(int(L), S_f, S_b, T_f, T_b, Vf, Vb, float(w2), shift, EPANECHNIKOV, pairs)


def _box_join_dict(yf, yb, bf, bb, psi, Vf, Vb, shift, keep_pairs):
    # fallback for bounding boxes too large to flatten into int64 ids
    buckets: dict[tuple, list[int]] = {}
    for m, b in enumerate(map(tuple, bf)):
        buckets.setdefault(b, []).append(m)
    offs = list(itertools.product((-1, 0, 1), repeat=bf.shape[1]))
    pf_l, pb_l = [], []
    for mb, b in enumerate(bb):
        for o in offs:
            hit = buckets.get(tuple(int(x + y) for x, y in zip(b, o)))
            if hit:
                pf_l.extend(hit)
                pb_l.extend([mb] * len(hit))
    pf = np.array(pf_l, dtype=np.int64)
    pb = np.array(pb_l, dtype=np.int64)
    w = epanechnikov(yf[pf] - yb[pb]) * psi[pb] if pf.size else np.empty(0)
    keep = w > 0
    pf, pb, w = pf[keep], pb[keep], w[keep]
    Mf, Mb, C = len(yf), len(yb), Vf.shape[1]
    T_f = np.stack([np.bincount(pf, weights=w * Vb[pb, c], minlength=Mf) for c in range(C)], axis=1)
    T_b = np.stack([np.bincount(pb, weights=w * Vf[pf, c], minlength=Mb) for c in range(C)], axis=1)
    return JoinResult(int(pf.size), np.bincount(pf, weights=w, minlength=Mf),
                      np.bincount(pb, weights=w, minlength=Mb), T_f.reshape(Mf, C), T_b.reshape(Mb, C),
                      Vf, Vb, float(np.dot(w, w)), shift, EPANECHNIKOV,
                      (pf, pb, w) if keep_pairs else None)


def naive_join(yf: np.ndarray, yb: np.ndarray, Vf: np.ndarray, Vb: np.ndarray,
               log_psi_b: np.ndarray, kind: str = KRONECKER, keep_pairs: bool = False) -> JoinResult:
    """All-pairs reference join, ``O(M_f M_b)`` time and memory."""
    psi, shift = _psi_weights(log_psi_b)
    yf = np.asarray(yf)
    yb = np.asarray(yb)
    if kind == KRONECKER:
        K = np.all(yf[:, None, :] == yb[None, :, :], axis=2).astype(np.float64)
    else:
        K = epanechnikov(yf[:, None, :].astype(np.float64) - yb[None, :, :].astype(np.float64))
    W = K * psi[None, :]
    pf, pb = np.nonzero(W > 0)
    pairs = (pf, pb, W[pf, pb]) if keep_pairs else None
    return JoinResult(int(pf.size), W.sum(axis=1), W.sum(axis=0), W @ Vb, W.T @ Vf, Vf, Vb,
                      float((W * W).sum()), shift, kind, pairs)


def join_clouds(fwd: EndpointCloud, bwd: EndpointCloud, kernel: Kernel,
                keep_pairs: bool = False) -> JoinResult:
    Vf, Vb = fwd.values, bwd.values
    if kernel.kind == KRONECKER:
        return kronecker_join(fwd.endpoints, bwd.endpoints, Vf, Vb, bwd.log_psi, keep_pairs)
    return box_join(kernel.coordinates(fwd.endpoints), kernel.coordinates(bwd.endpoints),
                    Vf, Vb, bwd.log_psi, keep_pairs)
