"""Flatness of the interface against planar profiles, and its decay under rescaling.

All comparisons use the normalized rescaling v(X) = u(Z + r X) / (alpha r),
so that the reference profile has unit slope.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .analysis import AnalysisError, FreeBoundary, extract_free_boundary, measured_slope
from .grid import interpolate
from .kernel import Kernel
from .minimizer import Solution
from .report import Report

log = logging.getLogger(__name__)

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class FlatnessError(AnalysisError):
    pass


@dataclass
class FlatnessRecord:
    center: np.ndarray
    radius: float
    direction: np.ndarray
    epsilon: float
    alpha: float = math.nan

    def to_dict(self) -> dict[str, Any]:
        return {"r": self.radius, "nu": self.direction, "epsilon": self.epsilon,
                "alpha": self.alpha}


@dataclass
class CascadeResult:
    center: np.ndarray
    rtilde: float
    records: list[FlatnessRecord]
    gamma_fit: float
    direction_drift: list[float]
    drift_angle: list[float]
    hypothesis_report: dict[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.records])

    @property
    def radii(self) -> np.ndarray:
        return np.array([r.radius for r in self.records])

    def decay_ratios(self) -> np.ndarray:
        e = self.epsilons
        return e[1:] / np.where(e[:-1] > 0, e[:-1], np.nan)

    def to_dict(self) -> dict[str, Any]:
        return {"center": self.center, "rtilde": self.rtilde,
                "levels": [r.to_dict() for r in self.records],
                "gamma_fit": self.gamma_fit, "drift": self.direction_drift,
                "drift_angle": self.drift_angle, "decay_ratios": self.decay_ratios(),
                "hypothesis_report": self.hypothesis_report, "warnings": self.warnings}


def _unit(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float).reshape(-1)
    n = np.linalg.norm(nu)
    if not n > 0:
        raise FlatnessError("direction must be nonzero")
    return nu / n


def _ball_nodes(sol: Solution, center: np.ndarray, r: float):
    g = sol.grid
    if float(g.distance_to_boundary(center)) < r * (1 - 1e-12):
        raise FlatnessError(f"ball of radius {r} at {center} leaves the grid")
    X = g.coords().reshape(-1, g.dim)
    u = sol.u.values.reshape(-1)
    d2 = np.sum((X - center) ** 2, axis=1)
    sel = d2 <= r * r * (1 + 1e-12)
    return (X[sel] - center) / r, u[sel]


def _alpha(sol: Solution, center: np.ndarray, nu: np.ndarray) -> float:
    a = measured_slope(sol.u, center, nu)
    if not a > 0:
        raise FlatnessError(f"slope not measurable at {center} along {nu} (got {a})")
    return a


def _epsilon(Y: np.ndarray, u: np.ndarray, nu: np.ndarray, alpha: float, r: float) -> float:
    t = Y @ nu
    v = u / (alpha * r)
    lower = float(np.max(t - v))
    pos = v > 0
    upper = float(np.max(v[pos] - t[pos])) if pos.any() else 0.0
    return max(0.0, lower, upper)


def flatness_epsilon(sol: Solution, center, r: float, nu, alpha: float | None = None) -> float:
    """Smallest eps with (<Y - c, nu>/r - eps)+ <= u/(alpha r) <= (<Y - c, nu>/r + eps)+ on the ball."""
    center = np.asarray(center, dtype=float)
    nu = _unit(nu)
    Y, u = _ball_nodes(sol, center, r)
    if not np.any(u > 0):
        raise FlatnessError("no positive nodes in the ball")
    alpha = _alpha(sol, center, nu) if alpha is None else float(alpha)
    return _epsilon(Y, u, nu, alpha, r)


def _golden(fn, a: float, b: float, tol: float = 1e-7) -> tuple[float, float]:
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def _seed_normal(sol: Solution, center: np.ndarray, fb: FreeBoundary | None) -> np.ndarray:
    fb = fb if fb is not None else extract_free_boundary(sol)
    if fb.empty:
        raise FlatnessError("empty free boundary: no seed normal")
    i = int(np.argmin(np.linalg.norm(fb.points - center, axis=1)))
    return _unit(fb.normals[i])


def best_direction(sol: Solution, center, r: float, seed=None, fb: FreeBoundary | None = None,
                   width: float = 0.6) -> tuple[np.ndarray, float, float]:
    """Minimize flatness over directions; returns (nu, epsilon, alpha).

    Golden section on the angle within ``width`` radians of the seed, with
    the slope measured along the seed; the slope is then re-measured along
    the minimizer and the search repeated on a narrower bracket.
    """
    center = np.asarray(center, dtype=float)
    if sol.grid.dim != 2:
        raise FlatnessError("direction search is implemented in 2-D")
    seed = _seed_normal(sol, center, fb) if seed is None else _unit(seed)
    Y, u = _ball_nodes(sol, center, r)
    if not np.any(u > 0):
        raise FlatnessError("no positive nodes in the ball")
    th0 = math.atan2(seed[1], seed[0])

    def vec(th):
        return np.array([math.cos(th), math.sin(th)])

    alpha = _alpha(sol, center, seed)
    best = (seed, _epsilon(Y, u, seed, alpha, r), alpha)
    th, _ = _golden(lambda t: _epsilon(Y, u, vec(t), alpha, r), th0 - width, th0 + width)
    for w in (0.1,):
        a2 = _alpha(sol, center, vec(th))
        th, _ = _golden(lambda t: _epsilon(Y, u, vec(t), a2, r), th - w, th + w)
    nu = vec(th)
    a_final = _alpha(sol, center, nu)
    eps = _epsilon(Y, u, nu, a_final, r)
    if eps <= best[1]:
        best = (nu, eps, a_final)
    return best


def harnack_dichotomy_check(sol: Solution, center, r: float, sigma: float, nu=None,
                            alpha: float | None = None, shift: float = 0.0,
                            slack: float | None = None) -> Report:
    """Test the two-branch improvement on v = u(c + r X)/(alpha r).

    ``sigma`` is the sandwich width and ``shift`` the offset of the affine
    comparison p(X) = X_n + shift (|shift| < 1/20), X_n = <X, nu>. The
    hypothesis p+ <= v <= (p + sigma)+ is checked on the unit ball up to
    ``slack`` (default 2h/r); if it fails the report is marked inapplicable.
    """
    center = np.asarray(center, dtype=float)
    g = sol.grid
    rep = Report("harnack_dichotomy")
    if abs(shift) >= 1.0 / 20.0:
        raise FlatnessError(f"|shift| must be below 1/20, got {shift}")
    nu = _seed_normal(sol, center, None) if nu is None else _unit(nu)
    alpha = _alpha(sol, center, nu) if alpha is None else float(alpha)
    slack = 2 * g.h / r if slack is None else slack
    Y, u = _ball_nodes(sol, center, r)
    v = u / (alpha * r)
    p = Y @ nu + shift
    eps = float(sigma)
    low_def = float(np.max(np.maximum(p, 0.0) - v))
    up_def = float(np.max(v - np.maximum(p + eps, 0.0)))
    rep.metrics.update({"sigma": eps, "shift": shift, "alpha": alpha, "nu": nu,
                        "hypothesis_lower_defect": low_def, "hypothesis_upper_defect": up_def})
    applicable = low_def <= slack and up_def <= slack
    rep.metrics["applicable"] = applicable
    if not applicable:
        rep.metrics["branch"] = "inapplicable"
        return rep
    x0 = center + r * 0.1 * nu
    v0 = float(interpolate(sol.u, x0)) / (alpha * r)
    p0 = 0.1 + shift
    rep.metrics["v_at_X0"] = v0
    half = np.sum(Y * Y, axis=1) <= 0.25 * (1 + 1e-12)
    vh, ph = v[half], p[half]
    if eps == 0:
        rep.metrics.update({"branch": "both", "c": 1.0, "defect": max(low_def, up_def, 0.0)})
        rep.checks["branch_holds"] = True
        return rep
    if v0 >= max(p0 + 0.5 * eps, 0.0):
        c = float(np.min((vh - ph) / eps))
        branch = "lower"
    else:
        pos = vh > 0
        c = float(np.min(1.0 - (vh[pos] - ph[pos]) / eps)) if pos.any() else 1.0
        branch = "upper"
    rep.metrics.update({"branch": branch, "c_raw": c, "c": min(c, 1.0)})
    rep.checks["branch_holds"] = c > -slack / eps
    return rep


def harnack_at(sol: Solution, center, r: float, fb: FreeBoundary | None = None) -> Report:
    """Dichotomy check with the sandwich read off the best planar fit at radius r.

    The shift is minus the lower defect and the width is the sum of both
    defects, the tightest (p, sigma) with p+ <= v <= (p + sigma)+.
    """
    center = np.asarray(center, dtype=float)
    nu, _, alpha = best_direction(sol, center, r, fb=fb)
    Y, u = _ball_nodes(sol, center, r)
    t = Y @ nu
    v = u / (alpha * r)
    low = max(0.0, float(np.max(t - v)))
    pos = v > 0
    width = max(0.0, float(np.max(v[pos] - (t[pos] - low)))) if pos.any() else 0.0
    if low >= 1.0 / 20.0:
        rep = Report("harnack_dichotomy")
        rep.metrics.update({"applicable": False, "branch": "inapplicable",
                            "hypothesis_lower_defect": low})
        return rep
    return harnack_dichotomy_check(sol, center, r, width, nu=nu, alpha=alpha, shift=-low)


def viscosity_touch_test(sol: Solution, kernel: Kernel, center, phi: dict[str, Any],
                         kappa: float | None = None, radius_cells: float = 6.0,
                         rtol: float = 1e-6) -> Report:
    """Compare the quadratic phi(Y) = <g, Y - c> + <H (Y - c), Y - c>/2 with u near c.

    ``phi`` has keys ``gradient`` and optionally ``hessian``. Touching from
    below means phi+ <= u on B_(6h)(c), from above u <= phi+, both up to
    h^2 |H| plus rounding.
    """
    g = sol.grid
    center = np.asarray(center, dtype=float)
    grad = np.asarray(phi["gradient"], dtype=float)
    H = np.asarray(phi.get("hessian", np.zeros((g.dim, g.dim))), dtype=float)
    if not np.linalg.norm(grad) > 0:
        raise FlatnessError("test function gradient must be nonzero")
    r = radius_cells * g.h
    Y, u = _ball_nodes(sol, center, r)
    D = Y * r
    ph = D @ grad + 0.5 * np.einsum("qi,ij,qj->q", D, H, D)
    php = np.maximum(ph, 0.0)
    slack = g.h ** 2 * float(np.linalg.norm(H, 2)) + 1e-12 * (1.0 + float(np.max(np.abs(u))))
    below = bool(np.all(php <= u + slack))
    above = bool(np.all(u <= php + slack))
    kappa = kernel.kappa if kappa is None else float(kappa)
    # <flux(g), g> is <A g, g> for the jetflow form and matches the kappa fit
    # of fbc_check for every form
    lhs = float(np.dot(kernel.flux(center, grad), grad))
    Q = float(kernel.Q(center))
    diff = lhs - kappa * Q
    tol = rtol * (1.0 + abs(kappa * Q))
    rep = Report("viscosity_touch")
    rep.metrics.update({"touch_below": below, "touch_above": above, "AgG": lhs,
                        "kappa": kappa, "Q": Q, "difference": diff, "slack": slack,
                        "sign": int(np.sign(diff)) if abs(diff) > tol else 0})
    rep.metrics["applicable"] = below or above
    if below:
        # a touching-from-below test surface must satisfy <A g, g> <= kappa Q
        rep.checks["below_inequality"] = diff <= tol
    if above:
        rep.checks["above_inequality"] = diff >= -tol
    rep.metrics["equality_case"] = below and above
    return rep


# ---------------------------------------------------------------------------


def _holder_seminorm(kernel: Kernel, center: np.ndarray, r: float, beta: float,
                     samples: int = 2000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    n = kernel.dim
    ang = rng.normal(size=(2 * samples, n))
    ang /= np.linalg.norm(ang, axis=1, keepdims=True)
    rad = r * rng.random((2 * samples, 1)) ** (1.0 / n)
    P = center + ang * rad
    X, Y = P[:samples], P[samples:]
    d = np.linalg.norm(X - Y, axis=1)
    ok = d > 1e-9 * r
    q = np.abs(kernel.Q(X) - kernel.Q(Y))
    return float(np.max(q[ok] / d[ok] ** beta))


def hypothesis_report(sol: Solution, kernel: Kernel, center, r0: float) -> dict[str, Any]:
    g = sol.grid
    center = np.asarray(center, dtype=float)
    X = g.coords().reshape(-1, g.dim)
    inside = np.sum((X - center) ** 2, axis=1) <= r0 * r0
    Xi = X[inside]
    A = kernel.A(Xi)
    beta = kernel.params.beta_Q
    return {
        "a_minus_identity_sup": float(np.max(np.abs(A - np.eye(g.dim)))),
        "f_sup": float(np.max(np.abs(kernel.f(Xi)))),
        "Q_holder_seminorm": _holder_seminorm(kernel, center, r0, beta),
        "Q_at_center": float(kernel.Q(center)),
        "beta_Q": beta,
    }


def improvement_cascade(sol: Solution, center, r0: float, rtilde: float = 0.5, K: int = 3,
                        kernel: Kernel | None = None, fb: FreeBoundary | None = None,
                        seed=None) -> CascadeResult:
    """Best flatness at radii r_k = r0 rtilde^k, k = 0..K."""
    g = sol.grid
    center = np.asarray(center, dtype=float)
    if not 0 < rtilde < 1:
        raise FlatnessError(f"rtilde must lie in (0, 1), got {rtilde}")
    warnings = []
    K_ok = K
    while K_ok >= 0 and r0 * rtilde ** K_ok < 8 * g.h * (1 - 1e-12):
        K_ok -= 1
    if K_ok < 0:
        raise FlatnessError(f"r0 = {r0} is below 8h; nothing is resolvable")
    if K_ok < K:
        msg = f"cascade truncated to K = {K_ok}: r0 rtilde^K below 8h"
        log.warning(msg)
        warnings.append(msg)
    fb = fb if fb is not None else extract_free_boundary(sol)
    nu = _seed_normal(sol, center, fb) if seed is None else _unit(seed)
    records = []
    for k in range(K_ok + 1):
        rk = r0 * rtilde ** k
        nu, eps, alpha = best_direction(sol, center, rk, seed=nu, fb=fb)
        records.append(FlatnessRecord(center, rk, nu, eps, alpha))
    eps = np.array([r.epsilon for r in records])
    radii = np.array([r.radius for r in records])
    good = eps > 1e-12
    if good.sum() >= 2:
        gamma = float(np.polyfit(np.log(radii[good]), np.log(eps[good]), 1)[0])
    else:
        gamma = math.inf
    drift = [float(np.linalg.norm(b.direction - a.direction)) for a, b in zip(records, records[1:])]
    angle = [float(2 * math.asin(min(1.0, d / 2))) for d in drift]
    hyp: dict[str, Any] = {}
    if kernel is not None:
        hyp = hypothesis_report(sol, kernel, center, r0)
        beta = kernel.params.beta_Q
        hyp["rtilde_beta"] = rtilde ** beta
        hyp["rtilde_beta_le_quarter"] = bool(rtilde ** beta <= 0.25)
    hyp["drift_over_eps_squared"] = [d / e ** 2 if e > 0 else math.nan
                                     for d, e in zip(drift, eps[:-1])]
    return CascadeResult(center, rtilde, records, gamma, drift, angle, hyp, warnings)
