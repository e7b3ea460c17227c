"""Independent one-dimensional ground truth and planar fixtures.

The oracle convention is G = |xi|^p on [0, L] with u(0) = 0 and u(L) = b.
The energy is the integral of |u'|^p + f u+ + q [u > 0].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import bisect

from .grid import Grid, GridFunction

log = logging.getLogger(__name__)


class OracleError(ValueError):
    pass


@dataclass
class Oracle1D:
    p: float
    q: float
    b: float
    L: float
    f_const: float
    m: float
    slope: float
    fb_position: float
    energy: float
    branch: str
    coeffs: tuple[float, ...] = ()

    @property
    def inputs(self) -> dict[str, float]:
        return {"p": self.p, "q": self.q, "b": self.b, "L": self.L,
                "f_const": self.f_const, "m": self.m}

    def __call__(self, x) -> np.ndarray:
        """Profile: zero on [0, x0], polynomial in (x - x0) on (x0, L]."""
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.fb_position, 0.0)
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = x - self.fb_position
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.where(t > 0, np.polynomial.polynomial.polyval(np.maximum(t, 0.0), d), 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {"inputs": self.inputs, "slope": self.slope, "fb_position": self.fb_position,
                "energy": self.energy, "branch": self.branch}


def _check_inputs(p, q, b, L):
    if not p >= 2:
        raise OracleError(f"p must be >= 2, got {p}")
    if not q > 0:
        raise OracleError(f"q must be positive, got {q}")
    if not b >= 0:
        raise OracleError(f"b must be nonnegative, got {b}")
    if not L > 0:
        raise OracleError(f"L must be positive, got {L}")


def _poly_energy(coeffs, d, f, q) -> float:
    P = np.polynomial.Polynomial(coeffs)
    dP = P.deriv()
    I = (dP * dP).integ()
    J = P.integ()
    return float(I(d) - I(0.0) + f * (J(d) - J(0.0)) + q * d)


def oracle_1d(p: float, q: float, b: float, L: float = 1.0, f_const: float = 0.0,
              m: float = 1.0) -> Oracle1D:
    _check_inputs(p, q, b, L)
    if f_const != 0 and (p != 2 or m != 1):
        raise OracleError("the f != 0 branch is implemented for p = 2, m = 1 only")
    s = (q / (p - 1.0)) ** (1.0 / p)
    if b == 0:
        return Oracle1D(p, q, b, L, f_const, m, 0.0, L, 0.0, "trivial", (0.0,))

    if f_const == 0:
        if b >= s * L:
            slope = b / L
            energy = b ** p / L ** (p - 1) + q * L
            return Oracle1D(p, q, b, L, 0.0, m, slope, 0.0, energy, "clamped", (0.0, slope))
        d = b / s
        energy = b ** p / d ** (p - 1) + q * d
        return Oracle1D(p, q, b, L, 0.0, m, s, L - d, energy, "interior", (0.0, s))

    # On the support the Euler-Lagrange equation of |u'|^2 + f u is u'' = f/2;
    # the free boundary slope is still sqrt(q) because f u+ vanishes there.
    f = float(f_const)
    c2 = f / 4.0
    candidates = []

    def mismatch(x0):
        d = L - x0
        return c2 * d * d + s * d - b

    # smallest support length reaching b while u' stays positive
    d_cap = L if f >= 0 else min(L, -s / (2 * c2))
    if mismatch(L - d_cap) >= 0:
        x0 = bisect(mismatch, L - d_cap, L, xtol=1e-12, rtol=4 * np.finfo(float).eps,
                    maxiter=200)
        d = L - x0
        coeffs = (0.0, s, c2)
        candidates.append((_poly_energy(coeffs, d, f, q), x0, s, "interior", coeffs))
    # Dirichlet-clamped profile on the whole interval
    c1 = b / L - c2 * L
    coeffs = (0.0, c1, c2)
    xs = np.linspace(0.0, L, 2001)
    if c1 >= 0 and np.all(np.polynomial.polynomial.polyval(xs, coeffs) >= -1e-14):
        candidates.append((_poly_energy(coeffs, L, f, q), 0.0, c1, "clamped", coeffs))
    if not candidates:
        raise OracleError(f"no nonnegative critical profile for f = {f}; the "
                          "forcing is too negative for this boundary value")
    energy, x0, slope, branch, coeffs = min(candidates, key=lambda c: (c[0], -c[1]))
    return Oracle1D(p, q, b, L, f, m, slope, x0, energy, f"shooting-{branch}", coeffs)


# ---------------------------------------------------------------------------


@dataclass
class DiscreteOracle1D:
    p: float
    q: float
    b: float
    L: float
    f_const: float
    m: float
    nodes: int
    fb_index: int
    fb_position: float
    energy: float
    slope: float
    values: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)
    skipped: list[dict[str, Any]] = field(default_factory=list)

    @property
    def h(self) -> float:
        return self.L / (self.nodes - 1)

    def to_dict(self) -> dict[str, Any]:
        return {"inputs": {"p": self.p, "q": self.q, "b": self.b, "L": self.L,
                           "f_const": self.f_const, "m": self.m, "nodes": self.nodes},
                "slope": self.slope, "fb_position": self.fb_position, "fb_index": self.fb_index,
                "energy": self.energy, "branch": "brute-force", "skipped": self.skipped}


def discrete_energy_1d(u: np.ndarray, h: float, p: float, q: float, f: float = 0.0,
                       m: float = 1.0) -> float:
    """Cell-centred energy with G = |xi|^p, matching the 2-D discretization."""
    du = np.diff(u) / h
    uc = 0.5 * (u[1:] + u[:-1])
    return float(np.sum(np.abs(du) ** p + f * np.maximum(uc, 0.0) ** m + q * (uc > 0)) * h)


def _support_solve(k: int, b: float, h: float, p: float, f: float, tol: float = 1e-12,
                   max_iter: int = 500) -> np.ndarray | None:
    """Minimize sum |du/h|^p h + f h sum u_c on k cells with u = 0 left, u = b right.

    Lagged-diffusivity (Kacanov) iteration; one linear solve when p = 2.
    Returns the k + 1 nodal values or None if the iteration fails.
    """
    u = np.linspace(0.0, b, k + 1)
    if k == 1:
        return u
    n = k - 1
    for _ in range(max_iter):
        du = np.diff(u) / h
        if p == 2:
            w = np.ones(k)
        else:
            w = np.abs(du) ** (p - 2)
            w = np.maximum(w, 1e-300)
        # w_{j-1} (u_j - u_{j-1}) - w_j (u_{j+1} - u_j) = -f h^2 / p
        ab = np.zeros((3, n))
        ab[0, 1:] = -w[1:n]
        ab[1, :] = w[:n] + w[1:]
        ab[2, :-1] = -w[1:n]
        rhs = np.full(n, -f * h * h / p)
        rhs[-1] += w[-1] * b
        new = np.concatenate([[0.0], solve_banded((1, 1), ab, rhs), [b]])
        if not np.all(np.isfinite(new)):
            return None
        if p == 2:
            return new
        du_new = np.diff(new) / h
        flx = p * np.abs(du_new) ** (p - 2) * du_new
        res = np.abs(np.diff(flx) - f * h)
        u = new
        if np.max(res) <= tol * (1.0 + np.max(np.abs(flx))):
            return u
    return None


def brute_force_1d(p: float, q: float, b: float, L: float = 1.0, f_const: float = 0.0,
                   m: float = 1.0, nodes: int = 1025) -> DiscreteOracle1D:
    """Exhaustive enumeration of connected supports (x_i, L]."""
    _check_inputs(p, q, b, L)
    if not 3 <= nodes <= 4097:
        raise OracleError(f"nodes must lie in [3, 4097], got {nodes}")
    if f_const != 0 and m != 1:
        raise OracleError("brute force supports f != 0 only with m = 1")
    h = L / (nodes - 1)
    N = nodes
    energies = np.full(N - 1, np.inf)
    skipped: list[dict[str, Any]] = []
    best_i, best_E, best_u = -1, np.inf, None
    for i in range(N - 1):
        k = N - 1 - i
        if f_const == 0 and p == 2:
            seg = np.linspace(0.0, b, k + 1)
        else:
            seg = _support_solve(k, b, h, p, f_const)
            if seg is None:
                skipped.append({"fb_index": i, "reason": "inner solve did not converge"})
                log.warning("brute_force_1d: support %d skipped, inner solve diverged", i)
                continue
        if b > 0 and np.any(seg[1:] <= 0):
            skipped.append({"fb_index": i, "reason": "support solution not positive"})
            log.warning("brute_force_1d: support %d skipped, solution not positive", i)
            continue
        u = np.zeros(N)
        u[i:] = seg
        E = discrete_energy_1d(u, h, p, q, f_const, m)
        energies[i] = E
        # ties go to the larger free boundary position
        if E <= best_E * (1 + 1e-14) + 1e-300:
            best_i, best_E, best_u = i, E, u
    if best_u is None:
        raise OracleError("every support was skipped")
    slope = (best_u[best_i + 1] - best_u[best_i]) / h
    return DiscreteOracle1D(p, q, b, L, f_const, m, nodes, best_i, best_i * h, best_E,
                            float(slope), best_u, energies, skipped)


# ---------------------------------------------------------------------------


def planar_profile(alpha: float, nu, offset: float, grid: Grid) -> GridFunction:
    """alpha * (<X, nu> - offset)+ sampled on the grid nodes."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if nu.shape != (grid.dim,) or abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise OracleError(f"nu must be a unit {grid.dim}-vector, got {nu}")
    t = grid.coords() @ nu - offset
    return GridFunction(grid, alpha * np.maximum(t, 0.0))


def strip_boundary(alpha: float, y0: float):
    """Callable X -> alpha (X_n - y0)+, the trace of the x-invariant strip problem."""
    def phi(X):
        X = np.asarray(X, dtype=float)
        return alpha * np.maximum(X[..., -1] - y0, 0.0)

    return phi


def predicted_slope(p: float, q: float) -> float:
    return (q / (p - 1.0)) ** (1.0 / p)


def is_close_to_slope_identity(o: Oracle1D) -> float:
    """Defect of (p - 1) s^p = q on the interior branch."""
    return abs((o.p - 1.0) * o.slope ** o.p - o.q) if o.branch == "interior" else math.nan
