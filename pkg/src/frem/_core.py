"""Jitted inner loops: lattice propensities, batched SSA, fixed-step RK4.

Kernels take the flat arrays of :class:`frem.model.CompiledModel` unpacked as
positional arguments (stoich, shift, fac_species, fac_order, fac_guard,
n_factors, scale).  Monomials for all channels are filled in one call per
state; per-channel calls cost more than the arithmetic itself.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def monomials_into(x, out, stoich, shift, fsp, ford, fguard, nf, scale):
    """``out[j] = g_j(x)`` for every channel; ``x`` may be integer or real."""
    J, d = stoich.shape
    for j in range(J):
        val = scale[j]
        for i in range(d):
            if x[i] + shift[j, i] < 0 or x[i] + stoich[j, i] < 0:
                val = 0.0
                break
        k = 0
        while val != 0.0 and k < nf[j]:
            sp = fsp[j, k]
            w = x[sp] + shift[j, sp]
            if w < fguard[j, k]:
                val = 0.0
            else:
                for r in range(ford[j, k]):
                    val *= w - r
            k += 1
        out[j] = val if val > 0.0 else 0.0


@njit(cache=True)
def ssa_batch(start, duration, n_paths, theta, rng, with_psi,
              stoich, shift, fsp, ford, fguard, nf, scale,
              f_stoich, f_shift, f_fsp, f_ford, f_fguard, f_nf, f_scale):
    """Simulate ``n_paths`` independent paths from ``start`` for ``duration``.

    The first model block drives the jumps; the ``f_*`` block is the forward
    model used for the F statistics and, when ``with_psi``, the correction
    ``c(y) = a~_0(y) - a_0(y)`` integrated into ``log_psi``.
    Two uniforms are consumed per step: channel selection, then holding time.
    """
    J, d = stoich.shape
    ends = np.empty((n_paths, d), dtype=np.int64)
    R = np.zeros((n_paths, J), dtype=np.int64)
    F = np.zeros((n_paths, J), dtype=np.float64)
    log_psi = np.zeros(n_paths, dtype=np.float64)
    x = np.empty(d, dtype=np.int64)
    a = np.empty(J, dtype=np.float64)
    g = np.empty(J, dtype=np.float64)
    for m in range(n_paths):
        for i in range(d):
            x[i] = start[i]
        t = 0.0
        while True:
            monomials_into(x, a, stoich, shift, fsp, ford, fguard, nf, scale)
            a0 = 0.0
            fwd0 = 0.0
            if with_psi:
                monomials_into(x, g, f_stoich, f_shift, f_fsp, f_ford, f_fguard, f_nf, f_scale)
                for j in range(J):
                    a[j] *= theta[j]
                    a0 += a[j]
                    fwd0 += theta[j] * g[j]
            else:
                for j in range(J):
                    g[j] = a[j]
                    a[j] *= theta[j]
                    a0 += a[j]
            u1 = 0.0
            tau = np.inf
            if a0 > 0.0:
                u1 = rng.random()
                tau = -np.log(1.0 - rng.random()) / a0
            done = t + tau >= duration
            dt = duration - t if done else tau
            for j in range(J):
                F[m, j] += g[j] * dt
            if with_psi:
                log_psi[m] += (a0 - fwd0) * dt
            if done:
                break
            t += tau
            target = u1 * a0
            acc = 0.0
            sel = J - 1
            for j in range(J):
                acc += a[j]
                if acc > target:
                    sel = j
                    break
            while a[sel] == 0.0:
                sel -= 1
            for i in range(d):
                x[i] += stoich[sel, i]
            R[m, sel] += 1
        for i in range(d):
            ends[m, i] = x[i]
    return ends, R, F, log_psi


@njit(cache=True)
def _rk4(z0, theta, h, n_steps, keep, stoich, shift, fsp, ford, fguard, nf, scale):
    """Classical RK4 with negative components clamped after each step.

    The four stages share one loop body so the right-hand side is written once.
    """
    J, d = stoich.shape
    traj = np.empty((n_steps + 1 if keep else 1, d), dtype=np.float64)
    z = z0.copy()
    traj[0] = z
    k = np.empty((4, d))
    g = np.empty(J)
    tmp = z.copy()
    for s in range(n_steps):
        for st in range(4):
            monomials_into(tmp, g, stoich, shift, fsp, ford, fguard, nf, scale)
            for i in range(d):
                k[st, i] = 0.0
            for j in range(J):
                aj = theta[j] * g[j]
                if aj != 0.0:
                    for i in range(d):
                        k[st, i] += stoich[j, i] * aj
            if st < 3:
                frac = 0.5 * h if st < 2 else h
                for i in range(d):
                    tmp[i] = z[i] + frac * k[st, i]
        for i in range(d):
            z[i] = z[i] + h / 6.0 * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])
            if z[i] < 0.0:
                z[i] = 0.0
            tmp[i] = z[i]
        if keep:
            traj[s + 1] = z
    if not keep:
        traj[0] = z
    return traj


def rk4_path(z0, theta, h, n_steps, *model):
    return _rk4(z0, theta, h, n_steps, True, *model)


def rk4_final(z0, theta, h, n_steps, *model):
    return _rk4(z0, theta, h, n_steps, False, *model)[0]


@njit(cache=True)
def box_join_accumulate(yf, yb, kf, kb, offsets, uniq, dense, psi, Vf, Vb, keep_pairs):
    """Epanechnikov pair aggregates over neighboring unit boxes.

    Forward points are bucketed by box id in CSR form.  With ``dense`` the ids
    index the buckets directly (``uniq`` then only gives the id count);
    otherwise ids are located by binary search in the sorted ``uniq``.
    """
    Mf, d = yf.shape
    Mb = yb.shape[0]
    C = Vf.shape[1]
    nb = uniq[0] if dense else uniq.shape[0]
    bid = kf if dense else np.searchsorted(uniq, kf)
    start = np.zeros(nb + 1, dtype=np.int64)
    for m in range(Mf):
        start[bid[m] + 1] += 1
    for b in range(nb):
        start[b + 1] += start[b]
    fill = start[:-1].copy()
    members = np.empty(Mf, dtype=np.int64)
    for m in range(Mf):
        members[fill[bid[m]]] = m
        fill[bid[m]] += 1
    norm = 0.75 ** d
    S_f = np.zeros(Mf)
    S_b = np.zeros(Mb)
    T_f = np.zeros((Mf, C))
    T_b = np.zeros((Mb, C))
    L = 0
    w2 = 0.0
    cap = 16 if keep_pairs else 0
    pf = np.empty(cap, dtype=np.int64)
    pb = np.empty(cap, dtype=np.int64)
    pw = np.empty(cap, dtype=np.float64)
    for mb in range(Mb):
        if psi[mb] <= 0.0:
            continue
        for o in offsets:
            q = kb[mb] + o
            if dense:
                if q < 0 or q >= nb:
                    continue
                b = q
            else:
                b = np.searchsorted(uniq, q)
                if b >= nb or uniq[b] != q:
                    continue
            for idx in range(start[b], start[b + 1]):
                m = members[idx]
                w = 1.0
                for i in range(d):
                    e = yf[m, i] - yb[mb, i]
                    t = 1.0 - e * e
                    if t <= 0.0:
                        w = 0.0
                        break
                    w *= t
                if w == 0.0:
                    continue
                w = norm * w * psi[mb]
                if w <= 0.0:
                    continue
                S_f[m] += w
                S_b[mb] += w
                for c in range(C):
                    T_f[m, c] += w * Vb[mb, c]
                    T_b[mb, c] += w * Vf[m, c]
                w2 += w * w
                if keep_pairs:
                    if L == cap:
                        cap *= 2
                        pf2 = np.empty(cap, dtype=np.int64)
                        pb2 = np.empty(cap, dtype=np.int64)
                        pw2 = np.empty(cap, dtype=np.float64)
                        pf2[:L] = pf[:L]
                        pb2[:L] = pb[:L]
                        pw2[:L] = pw[:L]
                        pf, pb, pw = pf2, pb2, pw2
                    pf[L] = m
                    pb[L] = mb
                    pw[L] = w
                L += 1
    if keep_pairs:
        return L, S_f, S_b, T_f, T_b, w2, pf[:L].copy(), pb[:L].copy(), pw[:L].copy()
    return L, S_f, S_b, T_f, T_b, w2, pf, pb, pw
