"""Compiled node relaxation for quadratic G with a linear lower-order term.

Same piecewise-quadratic argmin as :class:`onephase.minimizer.LocalEnergy`,
written as explicit loops so a whole sweep runs without Python overhead.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _chi(uc, delta):
    if delta > 0.0:
        t = uc / delta
        if t <= 0.0:
            return 0.0
        if t >= 1.0:
            return 1.0
        return t
    return 1.0 if uc > 0.0 else 0.0


@njit(cache=True)
def _local(v, qa, qb, qc, r, f, Q, nc, m, delta, vol):
    E = 0.0
    for a in range(nc):
        uc = r[a] + v / nc
        E += (qa[a] * v + qb[a]) * v + qc[a] + Q[a] * _chi(uc, delta)
        if uc > 0.0 and f[a] != 0.0:
            E += f[a] * uc ** m
    return E * vol


@njit(cache=True)
def relax_sequence(u, order, node_flat, cell_flat, corner_flat, A, W, f_cells, Q_cells,
                   gcoef, m, vol, delta, omega, tie_tol):
    """Relax ``node_flat[order[k]]`` for k = 0, 1, ... in place; return max change."""
    n = W.shape[1]
    nc = W.shape[0]
    qa = np.empty(nc)
    qb = np.empty(nc)
    qc = np.empty(nc)
    r = np.empty(nc)
    f = np.empty(nc)
    Q = np.empty(nc)
    g0 = np.empty(n)
    Ag = np.empty(n)
    Aw = np.empty(n)
    bp = np.empty(2 * nc + 1)
    change = 0.0
    for kk in range(order.shape[0]):
        k = order[kk]
        node = node_flat[k]
        cur = u[node]
        for a in range(nc):
            c = cell_flat[k, a]
            for d in range(n):
                g0[d] = 0.0
            s = 0.0
            for b in range(nc):
                if b == a:
                    continue
                val = u[corner_flat[k, a, b]]
                s += val
                for d in range(n):
                    g0[d] += val * W[b, d]
            r[a] = s / nc
            for i in range(n):
                Ag[i] = 0.0
                Aw[i] = 0.0
                for j in range(n):
                    Ag[i] += A[c, i, j] * g0[j]
                    Aw[i] += A[c, i, j] * W[a, j]
            ta = 0.0
            tb = 0.0
            tc = 0.0
            for i in range(n):
                ta += Aw[i] * W[a, i]
                tb += g0[i] * Aw[i]
                tc += g0[i] * Ag[i]
            qa[a] = gcoef * ta
            qb[a] = 2.0 * gcoef * tb
            qc[a] = gcoef * tc
            f[a] = f_cells[c]
            Q[a] = Q_cells[c]
        a2 = 0.0
        a1 = 0.0
        for a in range(nc):
            a2 += qa[a]
            a1 += qb[a]
        a2 *= vol
        a1 *= vol
        # breakpoints of the piecewise structure, sorted
        nb = 0
        for a in range(nc):
            t = -r[a] * nc
            if t > 0.0:
                bp[nb] = t
                nb += 1
            if delta > 0.0:
                t = (delta - r[a]) * nc
                if t > 0.0:
                    bp[nb] = t
                    nb += 1
        for i in range(1, nb):
            x = bp[i]
            j = i - 1
            while j >= 0 and bp[j] > x:
                bp[j + 1] = bp[j]
                j -= 1
            bp[j + 1] = x
        E0 = _local(0.0, qa, qb, qc, r, f, Q, nc, m, delta, vol)
        best_v = 0.0
        best_E = E0
        lo = 0.0
        for piece in range(nb + 1):
            hi = bp[piece] if piece < nb else np.inf
            mid = 0.5 * (lo + hi) if piece < nb else lo + 1.0
            add = 0.0
            for a in range(nc):
                uc = r[a] + mid / nc
                if uc > 0.0:
                    add += f[a] / nc
                    if delta > 0.0 and uc < delta:
                        add += Q[a] / (delta * nc)
            v = -(a1 + add * vol) / (2.0 * a2)
            if v < lo:
                v = lo
            if v > hi:
                v = hi
            E = _local(v, qa, qb, qc, r, f, Q, nc, m, delta, vol)
            if E < best_E:
                best_E = E
                best_v = v
            lo = hi
        if best_E >= E0 - tie_tol * (1.0 + abs(E0)):
            best_v = 0.0
        new = best_v
        if omega != 1.0 and cur > 0.0 and best_v > 0.0:
            vw = cur + omega * (best_v - cur)
            if vw < 0.0:
                vw = 0.0
            Ew = _local(vw, qa, qb, qc, r, f, Q, nc, m, delta, vol)
            Ec = _local(cur, qa, qb, qc, r, f, Q, nc, m, delta, vol)
            if Ew <= Ec:
                new = vw
        u[node] = new
        dv = abs(new - cur)
        if dv > change:
            change = dv
    return change


def stencil_tables(shape: tuple[int, ...], nodes: tuple[np.ndarray, ...],
                   offsets: list[tuple[int, ...]]):
    """Flat indices of each node, of its 2^n cells and of every cell corner."""
    dim = len(shape)
    cell_shape = tuple(s - 1 for s in shape)
    node_flat = np.ravel_multi_index(nodes, shape)
    S = len(node_flat)
    nc = len(offsets)
    cell_flat = np.empty((S, nc), dtype=np.int64)
    corner_flat = np.empty((S, nc, nc), dtype=np.int64)
    for ai, a in enumerate(offsets):
        cidx = tuple(nodes[d] - a[d] for d in range(dim))
        cell_flat[:, ai] = np.ravel_multi_index(cidx, cell_shape)
        for bi, b in enumerate(offsets):
            corner_flat[:, ai, bi] = np.ravel_multi_index(
                tuple(cidx[d] + b[d] for d in range(dim)), shape)
    return node_flat.astype(np.int64), cell_flat, corner_flat
