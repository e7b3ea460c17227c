"""Variational kernels F(X, u, xi) = G(X, xi) + g(X, u) for one-phase problems.

Two integrand forms are supported:

``prototype``
    G(X, xi) = |xi|^(p-2) <A(X) xi, xi>
``jetflow``
    G(X, xi) = 1/2 <A(X) xi, xi>   (p = 2)

and the lower-order part is always g(X, u) = f(X) (u+)^m + Q(X) [u > 0].

All evaluation routines broadcast over leading axes: points ``X`` have shape
``(..., n)``, gradients ``xi`` shape ``(..., n)`` and matrices ``(..., n, n)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .report import Report

FORMS = ("prototype", "jetflow")


class KernelError(ValueError):
    """Raised for malformed kernels or inadmissible evaluation points."""


@dataclass(frozen=True)
class StructuralParams:
    p: float = 2.0
    m: float = 1.0
    lam: float = 1.0
    K: float = 1.0
    eps_Q: float = 0.5
    beta_Q: float = 1.0

    def __post_init__(self) -> None:
        if not self.p >= 2:
            raise KernelError(f"p must satisfy p >= 2, got {self.p}")
        if not 1 <= self.m < self.p:
            raise KernelError(f"m must satisfy 1 <= m < p, got m={self.m}, p={self.p}")
        if not self.lam > 0:
            raise KernelError(f"lambda must be positive, got {self.lam}")
        if not self.K > 0:
            raise KernelError(f"K must be positive, got {self.K}")
        if not 0 < self.eps_Q < 1:
            raise KernelError(f"eps_Q must lie in (0, 1), got {self.eps_Q}")
        if not 0 < self.beta_Q <= 1:
            raise KernelError(f"beta_Q must lie in (0, 1], got {self.beta_Q}")


# ---------------------------------------------------------------------------
# field families


def _points(X: Any, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if dim == 1 and (X.ndim == 0 or X.shape[-1] != 1):
        X = X[..., None]
    if X.ndim == 0 or X.shape[-1] != dim:
        raise KernelError(f"points must have trailing dimension {dim}, got shape {X.shape}")
    return X


class Field:
    """Base class for spatial fields; subclasses implement ``__call__``."""

    family = "abstract"
    dim = 2

    def describe(self) -> dict[str, Any]:
        raise NotImplementedError


class ScalarField(Field):
    pass


class MatrixField(Field):
    pass


@dataclass(frozen=True)
class ConstantScalar(ScalarField):
    value: float
    dim: int = 2
    family = "constant"

    def __call__(self, X):
        X = _points(X, self.dim)
        return np.full(X.shape[:-1], float(self.value))

    def describe(self):
        return {"family": "constant", "value": self.value}


@dataclass(frozen=True)
class AffineScalar(ScalarField):
    """c0 + <c, X>."""

    c0: float
    c: tuple[float, ...]
    dim: int = 2
    family = "affine"

    def __call__(self, X):
        X = _points(X, self.dim)
        return self.c0 + X @ np.asarray(self.c, dtype=float)

    def describe(self):
        return {"family": "affine", "c0": self.c0, "c": list(self.c)}


@dataclass(frozen=True)
class SinusoidalScalar(ScalarField):
    """c0 + amp * sin(2 pi <k, X> + phase)."""

    c0: float
    amp: float
    k: tuple[float, ...]
    phase: float = 0.0
    dim: int = 2
    family = "sinusoidal"

    def __call__(self, X):
        X = _points(X, self.dim)
        arg = 2.0 * math.pi * (X @ np.asarray(self.k, dtype=float)) + self.phase
        return self.c0 + self.amp * np.sin(arg)

    def lipschitz(self) -> float:
        return abs(self.amp) * 2.0 * math.pi * float(np.linalg.norm(self.k))

    def describe(self):
        return {"family": "sinusoidal", "c0": self.c0, "amp": self.amp,
                "k": list(self.k), "phase": self.phase}


@dataclass(frozen=True)
class ConstantMatrix(MatrixField):
    matrix: tuple[tuple[float, ...], ...]
    dim: int = 2
    family = "constant"

    def __call__(self, X):
        X = _points(X, self.dim)
        M = np.asarray(self.matrix, dtype=float)
        return np.broadcast_to(M, X.shape[:-1] + M.shape).copy()

    def describe(self):
        return {"family": "constant", "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True)
class AffineMatrix(MatrixField):
    """A0 + sum_d X_d A_d with symmetric A0, A_d."""

    A0: tuple[tuple[float, ...], ...]
    slopes: tuple[tuple[tuple[float, ...], ...], ...]
    dim: int = 2
    family = "affine"

    def __call__(self, X):
        X = _points(X, self.dim)
        A0 = np.asarray(self.A0, dtype=float)
        S = np.asarray(self.slopes, dtype=float)
        return A0 + np.einsum("...d,dij->...ij", X, S)

    def describe(self):
        return {"family": "affine", "A0": np.asarray(self.A0).tolist(),
                "slopes": np.asarray(self.slopes).tolist()}


@dataclass(frozen=True)
class SinusoidalMatrix(MatrixField):
    """A0 * (1 + amp * sin(2 pi <k, X> + phase))."""

    A0: tuple[tuple[float, ...], ...]
    amp: float
    k: tuple[float, ...]
    phase: float = 0.0
    dim: int = 2
    family = "sinusoidal"

    def __call__(self, X):
        X = _points(X, self.dim)
        A0 = np.asarray(self.A0, dtype=float)
        s = 1.0 + self.amp * np.sin(2.0 * math.pi * (X @ np.asarray(self.k, dtype=float)) + self.phase)
        return s[..., None, None] * A0

    def describe(self):
        return {"family": "sinusoidal", "A0": np.asarray(self.A0).tolist(), "amp": self.amp,
                "k": list(self.k), "phase": self.phase}


@dataclass(frozen=True)
class RotatedAnisotropic(MatrixField):
    """R(theta) diag(l1, l2) R(theta)^T with theta(X) = theta0 + <dtheta, X> (2-D)."""

    l1: float
    l2: float
    theta0: float = 0.0
    dtheta: tuple[float, float] = (0.0, 0.0)
    dim: int = 2
    family = "rotated-anisotropic"

    def __call__(self, X):
        X = _points(X, 2)
        th = self.theta0 + X @ np.asarray(self.dtheta, dtype=float)
        c, s = np.cos(th), np.sin(th)
        a11 = self.l1 * c * c + self.l2 * s * s
        a22 = self.l1 * s * s + self.l2 * c * c
        a12 = (self.l1 - self.l2) * c * s
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    def describe(self):
        return {"family": "rotated-anisotropic", "l1": self.l1, "l2": self.l2,
                "theta0": self.theta0, "dtheta": list(self.dtheta)}


class SampledTable:
    """Per-node field table read from CSV with columns x,y,a11,a12,a22,f,Q.

    The rows must cover a tensor-product lattice; values in between are
    multilinearly interpolated. One-dimensional tables use columns x,a11,f,Q.
    """

    def __init__(self, path: str | Path):
        self.path = str(path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise KernelError(f"empty field table {path}")
        cols = rows[0].keys()
        self.dim = 2 if "y" in cols else 1
        keys = ("x", "y")[: self.dim]
        axes = [np.unique([float(r[k]) for r in rows]) for k in keys]
        shape = tuple(len(a) for a in axes)
        if int(np.prod(shape)) != len(rows):
            raise KernelError(f"field table {path} is not a tensor-product lattice")
        names = ("a11", "a12", "a22", "f", "Q") if self.dim == 2 else ("a11", "f", "Q")
        data = {k: np.full(shape, np.nan) for k in names}
        for r in rows:
            idx = tuple(int(np.searchsorted(ax, float(r[k]))) for ax, k in zip(axes, keys))
            for k in names:
                data[k][idx] = float(r[k])
        self.axes = axes
        self._interp = {k: RegularGridInterpolator(tuple(axes), v) for k, v in data.items()}

    def __call__(self, name: str, X) -> np.ndarray:
        X = _points(X, self.dim)
        flat = X.reshape(-1, self.dim)
        try:
            out = self._interp[name](flat)
        except ValueError as exc:
            raise KernelError(f"point outside sampled field table {self.path}") from exc
        return out.reshape(X.shape[:-1])


@dataclass(frozen=True)
class TableScalar(ScalarField):
    table: SampledTable
    column: str
    family = "table"

    @property
    def dim(self):
        return self.table.dim

    def __call__(self, X):
        return self.table(self.column, X)

    def describe(self):
        return {"family": "table", "path": self.table.path, "column": self.column}


@dataclass(frozen=True)
class TableMatrix(MatrixField):
    table: SampledTable
    family = "table"

    @property
    def dim(self):
        return self.table.dim

    def __call__(self, X):
        if self.table.dim == 1:
            return self.table("a11", X)[..., None, None]
        a11, a12, a22 = (self.table(k, X) for k in ("a11", "a12", "a22"))
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    def describe(self):
        return {"family": "table", "path": self.table.path}


# ---------------------------------------------------------------------------
# integrand algebra on explicit matrices


def quad_form(A: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", xi, A, xi)


def integrand(A: np.ndarray, xi: np.ndarray, p: float, form: str) -> np.ndarray:
    q = quad_form(A, xi)
    if form == "jetflow":
        return 0.5 * q
    if p == 2:
        return q
    r2 = np.einsum("...i,...i->...", xi, xi)
    return r2 ** (0.5 * (p - 2)) * q


def flux(A: np.ndarray, xi: np.ndarray, p: float, form: str) -> np.ndarray:
    """xi-gradient of :func:`integrand`."""
    Axi = np.einsum("...ij,...j->...i", A, xi)
    if form == "jetflow":
        return Axi
    if p == 2:
        return 2.0 * Axi
    r2 = np.einsum("...i,...i->...", xi, xi)
    q = np.einsum("...i,...i->...", xi, Axi)
    safe = np.where(r2 > 0, r2, 1.0)
    coef = np.where(r2 > 0, (p - 2) * safe ** (0.5 * (p - 4)) * q, 0.0)
    return coef[..., None] * xi + 2.0 * (r2 ** (0.5 * (p - 2)))[..., None] * Axi


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel:
    params: StructuralParams
    A_field: Callable
    f_field: Callable
    Q_field: Callable
    form: str = "prototype"
    dim: int = 2
    kappa: float = 1.0
    domain: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self) -> None:
        if self.form not in FORMS:
            raise KernelError(f"unknown kernel form {self.form!r}; expected one of {FORMS}")
        if self.form == "jetflow" and self.params.p != 2:
            raise KernelError("jetflow form requires p = 2")
        if self.dim not in (1, 2):
            raise KernelError(f"dimension must be 1 or 2, got {self.dim}")

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def m(self) -> float:
        return self.params.m

    def _check_points(self, X) -> np.ndarray:
        X = _points(X, self.dim)
        if not np.all(np.isfinite(X)):
            raise KernelError("non-finite evaluation point")
        if self.domain is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.domain)
            slack = 1e-12 * (1.0 + np.abs(hi - lo))
            if np.any(X < lo - slack) or np.any(X > hi + slack):
                raise KernelError("evaluation point outside the field domain")
        return X

    def A(self, X) -> np.ndarray:
        X = self._check_points(X)
        M = np.asarray(self.A_field(X), dtype=float)
        if self.dim == 1 and M.shape == X.shape[:-1]:
            M = M[..., None, None]
        return M

    def f(self, X) -> np.ndarray:
        return np.asarray(self.f_field(self._check_points(X)), dtype=float)

    def Q(self, X) -> np.ndarray:
        return np.asarray(self.Q_field(self._check_points(X)), dtype=float)

    def G(self, X, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if not np.all(np.isfinite(xi)):
            raise KernelError("non-finite gradient argument")
        return integrand(self.A(X), xi, self.p, self.form)

    def flux(self, X, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if not np.all(np.isfinite(xi)):
            raise KernelError("non-finite gradient argument")
        return flux(self.A(X), xi, self.p, self.form)

    def g(self, X, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise KernelError("non-finite value argument")
        up = np.maximum(u, 0.0)
        return self.f(X) * up ** self.m + self.Q(X) * (u > 0)

    def describe(self) -> dict[str, Any]:
        def desc(fld):
            return fld.describe() if hasattr(fld, "describe") else {"family": "callable"}

        pr = self.params
        return {
            "form": self.form, "dim": self.dim, "kappa": self.kappa,
            "p": pr.p, "m": pr.m, "lambda": pr.lam, "K": pr.K,
            "eps_Q": pr.eps_Q, "beta_Q": pr.beta_Q,
            "A": desc(self.A_field), "f": desc(self.f_field), "Q": desc(self.Q_field),
        }


def prototype_kernel(p: float = 2.0, m: float = 1.0, A=None, f=0.0, Q=1.0, dim: int = 2,
                     form: str = "prototype", **params) -> Kernel:
    """Constant-coefficient convenience constructor, mostly for tests and fixtures."""
    A = np.eye(dim) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    f_field = f if callable(f) else ConstantScalar(float(f), dim=dim)
    Q_field = Q if callable(Q) else ConstantScalar(float(Q), dim=dim)
    A_field = A if callable(A) else ConstantMatrix(tuple(map(tuple, A.tolist())), dim=dim)
    defaults = {"lam": 1.0, "K": max(1.0, abs(float(f)) if not callable(f) else 1.0),
                "eps_Q": 0.1}
    defaults.update(params)
    sp = StructuralParams(p=p, m=m, **defaults)
    return Kernel(sp, A_field, f_field, Q_field, form=form, dim=dim)


# ---------------------------------------------------------------------------
# pointwise operations


def _vec(x, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise KernelError(f"non-finite {name}")
    return x


def eval_kernel_G(kernel: Kernel, X, xi) -> float:
    return float(kernel.G(_vec(X, "point"), _vec(xi, "gradient")))


def grad_kernel_A(kernel: Kernel, X, xi) -> np.ndarray:
    return kernel.flux(_vec(X, "point"), _vec(xi, "gradient"))


def eval_lower_order_g(kernel: Kernel, X, u: float) -> float:
    return float(kernel.g(_vec(X, "point"), float(u)))


def _unit(nu) -> np.ndarray:
    nu = _vec(nu, "normal")
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise KernelError(f"normal must be a unit vector, |nu| = {np.linalg.norm(nu)!r}")
    return nu


def fbc_slope_alpha(kernel: Kernel, X, nu) -> float:
    """(Q / <A(X, nu), nu>)^(1/(p-1)), A being the xi-gradient of G."""
    X = _vec(X, "point")
    nu = _unit(nu)
    denom = float(np.dot(kernel.flux(X, nu), nu))
    if not denom > 0:
        raise KernelError(f"degenerate <A(X, nu), nu> = {denom} violates the ellipticity bound")
    return float(kernel.Q(X) / denom) ** (1.0 / (kernel.p - 1.0))


def oracle_slope(kernel: Kernel, X, nu) -> float:
    """Slope s of the planar minimizer, from the one-dimensional energy balance
    (p - 1) G(X, nu) s^p = Q(X)."""
    X = _vec(X, "point")
    nu = _unit(nu)
    G = float(kernel.G(X, nu))
    if not G > 0:
        raise KernelError("degenerate G(X, nu)")
    return (float(kernel.Q(X)) / ((kernel.p - 1.0) * G)) ** (1.0 / kernel.p)


def slope_scale(kernel: Kernel, X: np.ndarray) -> float:
    """Typical planar slope over sample points X, used to put u-scales into length units."""
    A = kernel.A(X)
    a = np.mean(np.trace(A, axis1=-2, axis2=-1)) / kernel.dim
    c = 0.5 if kernel.form == "jetflow" else 1.0
    q = float(np.mean(kernel.Q(X)))
    return (q / ((kernel.p - 1.0) * c * a)) ** (1.0 / kernel.p)


# ---------------------------------------------------------------------------
# structural-condition verifier


@dataclass(frozen=True)
class SampleSpec:
    points: int = 10_000
    sphere_resolution: int = 64
    seed: int = 0
    box: tuple[tuple[float, ...], tuple[float, ...]] | None = None


def verify_structural_conditions(kernel: Kernel, samples: SampleSpec = SampleSpec(),
                                 G: Callable | None = None, rtol: float = 1e-9) -> Report:
    """Sample the growth, homogeneity, convexity and lower-order conditions.

    ``G`` optionally replaces the kernel integrand by a callable ``G(X, xi)``
    (used to exercise the verifier on deliberately broken integrands).
    Violations are reported, never raised.
    """
    rng = np.random.default_rng(samples.seed)
    n = kernel.dim
    if samples.box is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in samples.box)
    elif kernel.domain is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in kernel.domain)
    else:
        lo, hi = np.zeros(n), np.ones(n)
    N = samples.points
    X = lo + (hi - lo) * rng.random((N, n))
    Gf = G if G is not None else kernel.G
    p, pr = kernel.p, kernel.params
    rep = Report("structural_conditions")

    # two-sided growth on the unit sphere; with homogeneity this is the full bound
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = 2 * np.pi * np.arange(samples.sphere_resolution) / samples.sphere_resolution
        dirs = np.stack([np.cos(th), np.sin(th)], -1)
    nsub = min(N, 2000)
    Xs = np.repeat(X[:nsub, None, :], len(dirs), axis=1)
    Gs = np.asarray(Gf(Xs, np.broadcast_to(dirs, Xs.shape)), dtype=float)
    low_viol = float(np.max(pr.lam - Gs))
    up_viol = float(np.max(Gs - 1.0 / pr.lam))
    rep.metrics["growth_lower_worst"] = low_viol
    rep.metrics["growth_upper_worst"] = up_viol
    rep.checks["growth"] = low_viol <= rtol * pr.lam and up_viol <= rtol / pr.lam

    # homogeneity with random xi of random magnitude
    xi = rng.normal(size=(N, n)) * rng.uniform(0.1, 10.0, size=(N, 1))
    G0 = np.asarray(Gf(X, xi), dtype=float)
    worst = 0.0
    for t in (-2.0, -0.5, 0.5, 2.0):
        Gt = np.asarray(Gf(X, t * xi), dtype=float)
        worst = max(worst, float(np.max(np.abs(Gt - abs(t) ** p * G0) / (1.0 + np.abs(Gt)))))
    zero = np.asarray(Gf(X[:nsub], np.zeros((nsub, n))), dtype=float)
    worst = max(worst, float(np.max(np.abs(zero))))
    rep.metrics["homogeneity_worst"] = worst
    rep.checks["homogeneity"] = worst <= rtol

    # convexity along random segments (midpoint and quarter points)
    a = rng.normal(size=(N, n)) * 3.0
    b = rng.normal(size=(N, n)) * 3.0
    Ga, Gb = (np.asarray(Gf(X, v), dtype=float) for v in (a, b))
    cworst = 0.0
    for s in (0.25, 0.5, 0.75):
        Gm = np.asarray(Gf(X, (1 - s) * a + s * b), dtype=float)
        chord = (1 - s) * Ga + s * Gb
        cworst = max(cworst, float(np.max((Gm - chord) / (1.0 + np.abs(chord)))))
    rep.metrics["convexity_worst"] = cworst
    rep.checks["convexity"] = cworst <= rtol

    # lower-order term: bounds on f and Q, and the jump of g at u = 0
    f = kernel.f(X)
    Q = kernel.Q(X)
    rep.metrics["f_sup"] = float(np.max(np.abs(f)))
    rep.metrics["Q_min"] = float(np.min(Q))
    rep.metrics["Q_max"] = float(np.max(Q))
    jump = kernel.g(X, 1e-12) - kernel.g(X, 0.0)
    rep.metrics["jump_defect_worst"] = float(np.max(np.abs(jump - Q)))
    rep.checks["f_bound"] = rep.metrics["f_sup"] <= pr.K * (1 + rtol)
    rep.checks["Q_bounds"] = bool(np.all(Q > pr.eps_Q) and np.all(Q < 1.0 / pr.eps_Q))
    rep.checks["jump"] = rep.metrics["jump_defect_worst"] <= 1e-9

    # matrix field symmetry
    A = kernel.A(X[:nsub])
    rep.metrics["A_asymmetry"] = float(np.max(np.abs(A - np.swapaxes(A, -1, -2))))
    rep.checks["A_symmetric"] = rep.metrics["A_asymmetry"] <= rtol
    rep.metrics["samples"] = N
    return rep
