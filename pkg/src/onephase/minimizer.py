"""Nodewise relaxation for the discrete one-phase energy.

The discrete energy is

    E_h(u) = sum over cells of [G(X_c, grad u_c) + f_c (u_c+)^m + Q_c chi(u_c)] h^n

with u_c the cell-centre value and grad u_c the multilinear gradient. Each
node only enters the 2^n cells around it, so nodes with equal index parity
along every axis can be relaxed simultaneously; that is what the
``two-color`` order does (4 classes in 2-D).

For a single node the local energy as a function of its value v >= 0 is
smooth between breakpoints where an adjacent cell value crosses 0 (where
the jump of chi sits) or, when chi is mollified, crosses delta. On every
piece the energy is minimized (in closed form when G is quadratic and the
lower-order term is linear, by golden section otherwise) and the true local
energy decides between the pieces and v = 0. Ties go to 0.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .grid import (BoundaryData, Grid, GridError, GridFunction, cell_gradients, cell_values,
                   coons_extension, corner_offsets, corner_weights, interpolate, read_csv,
                   write_csv)
from ._quadratic import relax_sequence, stencil_tables
from .kernel import Kernel, integrand, slope_scale
from .report import dumps

log = logging.getLogger(__name__)

ORDERS = ("two-color", "lexicographic", "randomized")
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class Problem:
    kernel: Kernel
    grid: Grid
    boundary: BoundaryData

    def __post_init__(self):
        if self.kernel.dim != self.grid.dim:
            raise SolverError(f"kernel dimension {self.kernel.dim} != grid dimension {self.grid.dim}")
        if self.boundary.grid != self.grid:
            raise SolverError("boundary data lives on a different grid")


@dataclass(frozen=True)
class SolveOptions:
    """Solver controls.

    ``tol`` and ``max_sweeps`` default to 1e-8 sup(phi) and 50 times the
    largest node count per axis. ``omega`` is the over-relaxation factor for
    nodes that stay in the positive phase; ``"auto"`` picks the
    Laplacian-optimal value for the grid and 1.0 disables it. ``mollify``
    runs the smoothed-jump continuation before the exact stage: delta starts
    at ``mollify_start`` (default a quarter of the box size) and halves down
    to h/2, all in units of the planar slope.
    """

    tol: float | None = None
    max_sweeps: int | None = None
    sweep_order: str = "two-color"
    seed: int = 0
    line_search_tol: float = 1e-12
    continuation_levels: int = 1
    mollify: bool = False
    mollify_start: float | None = None
    omega: float | str = "auto"
    tie_tol: float = 1e-13

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise SolverError(f"tol must be positive, got {self.tol}")
        if self.max_sweeps is not None and self.max_sweeps < 1:
            raise SolverError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.sweep_order not in ORDERS:
            raise SolverError(f"unknown sweep order {self.sweep_order!r}; expected one of {ORDERS}")
        if self.continuation_levels < 1:
            raise SolverError("continuation_levels must be >= 1")
        if not self.line_search_tol > 0:
            raise SolverError("line_search_tol must be positive")
        if self.mollify_start is not None and not self.mollify_start > 0:
            raise SolverError("mollify_start must be positive")
        if self.omega != "auto" and not 0 < float(self.omega) < 2:
            raise SolverError(f"omega must lie in (0, 2), got {self.omega}")

    def resolved(self, grid: Grid, sup_phi: float) -> "SolveOptions":
        tol = self.tol if self.tol is not None else (1e-8 * sup_phi if sup_phi > 0 else 1e-12)
        ms = self.max_sweeps if self.max_sweeps is not None else 50 * max(grid.nodes)
        return SolveOptions(tol, ms, self.sweep_order, self.seed, self.line_search_tol,
                            self.continuation_levels, self.mollify, self.mollify_start,
                            self.omega, self.tie_tol)

    def omega_for(self, grid: Grid) -> float:
        if self.omega == "auto":
            ell = max(grid.extent)
            return 2.0 / (1.0 + math.sin(math.pi * grid.h / ell))
        return float(self.omega)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Solution:
    u: GridFunction
    energy_trace: list[float]
    sweeps_used: int
    converged: bool
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def fixture(cls, u: GridFunction, **metadata) -> "Solution":
        """Wrap a prescribed grid function (test profiles, loaded fields)."""
        return cls(u, [], 0, True, dict(metadata))

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def phase(self) -> np.ndarray:
        return self.u.values > 0

    @property
    def final_energy(self) -> float:
        return self.energy_trace[-1] if self.energy_trace else math.nan


# ---------------------------------------------------------------------------
# energies


class CellFields:
    """Kernel fields sampled once at the cell centres of a grid."""

    def __init__(self, kernel: Kernel, grid: Grid):
        Xc = grid.cell_centers()
        self.kernel = kernel
        self.grid = grid
        self.A = kernel.A(Xc)
        self.f = kernel.f(Xc)
        self.Q = kernel.Q(Xc)
        self.vol = grid.cell_volume
        self.quadratic = kernel.form == "jetflow" or kernel.p == 2
        self.gcoef = 0.5 if kernel.form == "jetflow" else 1.0
        self.linear_lower = bool(np.all(self.f == 0)) or kernel.m == 1


def chi_values(uc: np.ndarray, delta: float) -> np.ndarray:
    if delta > 0:
        return np.clip(uc / delta, 0.0, 1.0)
    return (uc > 0).astype(float)


def cell_energies(values: np.ndarray, fields: CellFields, delta: float = 0.0) -> np.ndarray:
    k = fields.kernel
    grad = cell_gradients(values, fields.grid.h)
    uc = cell_values(values)
    G = integrand(fields.A, grad, k.p, k.form)
    return (G + fields.f * np.maximum(uc, 0.0) ** k.m + fields.Q * chi_values(uc, delta)) * fields.vol


def total_energy(u: GridFunction, kernel: Kernel, delta: float = 0.0,
                 fields: CellFields | None = None) -> float:
    """Midpoint-quadrature discrete energy; ``delta > 0`` mollifies the jump."""
    if fields is None:
        fields = CellFields(kernel, u.grid)
    elif fields.grid != u.grid:
        raise GridError("grid function and cached fields live on different grids")
    return float(np.sum(cell_energies(u.values, fields, delta)))


class LocalEnergy:
    """Local energies of interior nodes as functions of their own value."""

    def __init__(self, fields: CellFields, nodes: tuple[np.ndarray, ...]):
        self.fields = fields
        self.nodes = nodes
        g = fields.grid
        self.n = g.dim
        self.ncorner = 2 ** self.n
        self.offsets = corner_offsets(self.n)
        W = corner_weights(self.n, g.h)
        self.cells = []
        for a in self.offsets:
            cidx = tuple(nodes[d] - a[d] for d in range(self.n))
            self.cells.append({
                "a": a, "idx": cidx, "w": W[a],
                "A": fields.A[cidx], "f": fields.f[cidx], "Q": fields.Q[cidx],
                "corners": [(b, W[b]) for b in self.offsets],
            })

    @property
    def size(self) -> int:
        return len(self.nodes[0])

    def prepare(self, values: np.ndarray, sel) -> list[dict[str, np.ndarray]]:
        """Gradient and mean of each adjacent cell with the node's value set to 0."""
        out = []
        for c in self.cells:
            idx = tuple(i[sel] for i in c["idx"])
            g0 = np.zeros((len(idx[0]), self.n))
            r = np.zeros(len(idx[0]))
            for b, wb in c["corners"]:
                if b == c["a"]:
                    continue
                val = values[tuple(idx[d] + b[d] for d in range(self.n))]
                g0 += val[:, None] * wb
                r += val
            A = c["A"][sel]
            entry = {"g0": g0, "r": r / self.ncorner, "w": c["w"],
                     "A": A, "f": c["f"][sel], "Q": c["Q"][sel]}
            # along the line g0 + w v, <A xi, xi> (times the form's factor) is
            # qa v^2 + qb v + qc and |xi|^2 is na v^2 + nb v + nc
            w = c["w"]
            Aw = A @ w
            Ag0 = np.einsum("sij,sj->si", A, g0)
            k = self.fields.gcoef
            entry["qa"] = k * (Aw @ w)
            entry["qb"] = 2.0 * k * np.einsum("si,si->s", g0, Aw)
            entry["qc"] = k * np.einsum("si,si->s", g0, Ag0)
            if not self.fields.quadratic:
                entry["na"] = np.full(len(r), float(w @ w))
                entry["nb"] = 2.0 * (g0 @ w)
                entry["nc"] = np.einsum("si,si->s", g0, g0)
            out.append(entry)
        return out

    def energy(self, v: np.ndarray, prep, delta: float) -> np.ndarray:
        """Local energy for candidate values ``v`` of shape (S, K)."""
        k = self.fields.kernel
        E = np.zeros(v.shape)
        for c in prep:
            G = (c["qa"][:, None] * v + c["qb"][:, None]) * v + c["qc"][:, None]
            if "na" in c:
                r2 = (c["na"][:, None] * v + c["nb"][:, None]) * v + c["nc"][:, None]
                G = np.maximum(r2, 0.0) ** (0.5 * (k.p - 2.0)) * G
            uc = c["r"][:, None] + v / self.ncorner
            lower = c["f"][:, None] * np.maximum(uc, 0.0) ** k.m
            E += G + lower + c["Q"][:, None] * chi_values(uc, delta)
        return E * self.fields.vol

    def breakpoints(self, prep, delta: float) -> np.ndarray:
        pts = [-c["r"] * self.ncorner for c in prep]
        if delta > 0:
            pts += [(delta - c["r"]) * self.ncorner for c in prep]
        B = np.stack(pts, axis=1)
        B = np.where(B > 0, B, 0.0)
        return np.sort(B, axis=1)

    def _piece_linear_terms(self, prep, mids: np.ndarray, delta: float) -> np.ndarray:
        """Linear coefficient from f and mollified chi on each piece (m = 1 or f = 0)."""
        vol = self.fields.vol
        add = np.zeros(mids.shape)
        for c in prep:
            uc = c["r"][:, None] + mids / self.ncorner
            add += np.where(uc > 0, c["f"][:, None], 0.0) / self.ncorner
            if delta > 0:
                add += np.where((uc > 0) & (uc < delta), c["Q"][:, None] / delta, 0.0) / self.ncorner
        return add * vol

    def argmin(self, prep, delta: float, line_search_tol: float, tie_tol: float,
               hint: np.ndarray) -> np.ndarray:
        S = len(prep[0]["r"])
        T = self.breakpoints(prep, delta)
        lo = np.concatenate([np.zeros((S, 1)), T], axis=1)
        if self.fields.quadratic and self.fields.linear_lower:
            vol = self.fields.vol
            a2 = sum(cc["qa"] for cc in prep) * vol
            a1 = sum(cc["qb"] for cc in prep) * vol
            hi = np.concatenate([T, np.full((S, 1), np.inf)], axis=1)
            mids = np.where(np.isfinite(hi), 0.5 * (lo + hi), lo + 1.0)
            slope = a1[:, None] + self._piece_linear_terms(prep, mids, delta)
            cand = np.clip(-slope / (2.0 * a2[:, None]), lo, hi)
        else:
            hi_last = self._bracket(prep, lo[:, -1], delta, hint)
            hi = np.concatenate([T, hi_last[:, None]], axis=1)
            cand = self._golden(prep, lo, hi, delta, line_search_tol)
        cand = np.concatenate([np.zeros((S, 1)), cand], axis=1)
        E = self.energy(cand, prep, delta)
        j = np.argmin(E, axis=1)
        best = cand[np.arange(S), j]
        Eb = E[np.arange(S), j]
        tie = Eb >= E[:, 0] - tie_tol * (1.0 + np.abs(E[:, 0]))
        return np.where(tie, 0.0, best)

    def _bracket(self, prep, lo, delta, hint):
        scale = np.maximum(np.maximum(hint, 0.0), 1e-12)
        for c in prep:
            scale = np.maximum(scale, np.abs(c["r"]) * self.ncorner)
        w = 2.0 * scale + delta * self.ncorner
        active = np.ones(len(lo), dtype=bool)
        for _ in range(200):
            e = self.energy(np.stack([lo + w, lo + 0.5 * w], 1), prep, delta)
            grow = active & (e[:, 0] < e[:, 1])
            if not grow.any():
                break
            w = np.where(grow, 2.0 * w, w)
            active = grow
        return lo + w

    def _golden(self, prep, a, b, delta, tol):
        a = a.copy()
        b = b.copy()
        c = b - INVPHI * (b - a)
        d = a + INVPHI * (b - a)
        fc = self.energy(c, prep, delta)
        fd = self.energy(d, prep, delta)
        for _ in range(200):
            if np.all(b - a <= tol * (1.0 + np.abs(b))):
                break
            left = fc < fd
            # keep [a, d] (left) or [c, b]; one new evaluation per entry
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            new = np.where(left, b - INVPHI * (b - a), a + INVPHI * (b - a))
            fn = self.energy(new, prep, delta)
            c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                            np.where(left, fn, fd), np.where(left, fc, fn))
        return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# relaxation


def _interior_nodes(grid: Grid) -> tuple[np.ndarray, ...]:
    return tuple(np.nonzero(~grid.boundary_mask))


def _color_classes(nodes: tuple[np.ndarray, ...]) -> list[np.ndarray]:
    code = np.zeros(len(nodes[0]), dtype=int)
    for d, idx in enumerate(nodes):
        code += (idx % 2) << d
    return [np.flatnonzero(code == c) for c in range(2 ** len(nodes)) if np.any(code == c)]


def relax_node(u: GridFunction, node, kernel: Kernel, line_search_tol: float = 1e-12,
               delta: float = 0.0, fields: CellFields | None = None,
               tie_tol: float = 1e-13) -> float:
    """Exact minimizer over v >= 0 of the local energy at one interior node."""
    g = u.grid
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != g.dim or any(not 0 <= i < n for i, n in zip(node, g.nodes)):
        raise SolverError(f"node {node} outside the grid")
    if g.boundary_mask[node]:
        raise SolverError(f"node {node} is a Dirichlet node and is never relaxed")
    fields = fields or CellFields(kernel, g)
    le = LocalEnergy(fields, tuple(np.array([i]) for i in node))
    prep = le.prepare(u.values, np.arange(1))
    v = le.argmin(prep, delta, line_search_tol, tie_tol, u.values[node][None])
    return float(v[0])


class Relaxer:
    """Sweeps over all interior nodes of one grid, reusing cached cell fields."""

    def __init__(self, fields: CellFields, options: SolveOptions):
        self.fields = fields
        self.options = options
        self.grid = fields.grid
        self.nodes = _interior_nodes(self.grid)
        self.local = LocalEnergy(fields, self.nodes)
        self.omega = options.omega_for(self.grid)
        self.rng = np.random.default_rng(options.seed)
        if options.sweep_order == "two-color":
            self.schedule = _color_classes(self.nodes)
        else:
            self.schedule = None
        self.compiled = fields.quadratic and fields.linear_lower
        if self.compiled:
            g = self.grid
            offs = corner_offsets(g.dim)
            W = corner_weights(g.dim, g.h)
            self._tables = stencil_tables(g.shape, self.nodes, offs)
            self._W = np.ascontiguousarray([W[a] for a in offs], dtype=float)
            self._A = np.ascontiguousarray(fields.A.reshape(-1, g.dim, g.dim), dtype=float)
            self._f = np.ascontiguousarray(fields.f.reshape(-1), dtype=float)
            self._Q = np.ascontiguousarray(fields.Q.reshape(-1), dtype=float)

    def _compiled_pass(self, values, order, delta):
        flat = values.reshape(-1)
        node_flat, cell_flat, corner_flat = self._tables
        m = float(self.fields.kernel.m)
        return relax_sequence(flat, np.ascontiguousarray(order, dtype=np.int64), node_flat,
                              cell_flat, corner_flat, self._A, self._W, self._f, self._Q,
                              self.fields.gcoef, m, self.fields.vol, float(delta),
                              float(self.omega), self.options.tie_tol)

    def _update(self, values, sel, delta):
        le = self.local
        opts = self.options
        prep = le.prepare(values, sel)
        cur = values[tuple(i[sel] for i in self.nodes)]
        v = le.argmin(prep, delta, opts.line_search_tol, opts.tie_tol, cur)
        if self.omega != 1.0:
            over = (cur > 0) & (v > 0)
            if over.any():
                vw = np.maximum(cur + self.omega * (v - cur), 0.0)
                ee = le.energy(np.stack([vw, cur], 1), prep, delta)
                ok = over & (ee[:, 0] <= ee[:, 1])
                v = np.where(ok, vw, v)
        values[tuple(i[sel] for i in self.nodes)] = v
        return float(np.max(np.abs(v - cur))) if len(v) else 0.0

    def sweep(self, values: np.ndarray, delta: float = 0.0) -> float:
        change = 0.0
        if self.compiled:
            if self.schedule is not None:
                for sel in self.schedule:
                    change = max(change, self._compiled_pass(values, sel, delta))
                return change
            N = self.local.size
            order = np.arange(N) if self.options.sweep_order == "lexicographic" else self.rng.permutation(N)
            return self._compiled_pass(values, order, delta)
        if self.schedule is not None:
            for sel in self.schedule:
                change = max(change, self._update(values, sel, delta))
            return change
        N = self.local.size
        order = np.arange(N) if self.options.sweep_order == "lexicographic" else self.rng.permutation(N)
        for k in order:
            change = max(change, self._update(values, np.array([k]), delta))
        return change


def sweep(u: GridFunction, kernel: Kernel, order: str = "two-color",
          options: SolveOptions | None = None, delta: float = 0.0) -> tuple[GridFunction, float]:
    """One relaxation pass over all interior nodes; returns (new u, max nodal change)."""
    opts = options or SolveOptions(sweep_order=order, omega=1.0)
    if options is not None and order != options.sweep_order:
        opts = SolveOptions(**{**asdict(options), "sweep_order": order})
    fields = CellFields(kernel, u.grid)
    rx = Relaxer(fields, opts)
    vals = u.values.copy()
    E0 = float(np.sum(cell_energies(vals, fields, delta)))
    change = rx.sweep(vals, delta)
    E1 = float(np.sum(cell_energies(vals, fields, delta)))
    if E1 > E0 + 1e-12 * (1.0 + abs(E0)):
        raise AssertionError(f"sweep increased the energy from {E0!r} to {E1!r}")
    return GridFunction(u.grid, vals), change


# ---------------------------------------------------------------------------
# driver


def _level_grids(grid: Grid, levels: int) -> list[Grid]:
    grids = [grid]
    for _ in range(levels - 1):
        g = grids[-1]
        if any((n - 1) % 2 or (n - 1) // 2 + 1 < 5 for n in g.nodes):
            log.warning("continuation stopped at %s: grid cannot be coarsened further", g.nodes)
            break
        grids.append(g.coarsen(2))
    return grids[::-1]


def mollify_ladder(grid: Grid, start: float | None, sigma: float) -> list[float]:
    """delta_k = start 2^-k (at least 2h), halving until h/2, times the slope scale."""
    top = max(grid.extent) / 4.0 if start is None else float(start)
    d = max(top, 2.0 * grid.h)
    out = []
    while d > 0.5 * grid.h * (1 + 1e-12):
        out.append(d * sigma)
        d /= 2.0
    out.append(0.5 * grid.h * sigma)
    return out


def _clamp(values: np.ndarray, scale: float) -> np.ndarray:
    # rounding noise of size 1e-17 would otherwise switch on whole cells of chi
    return np.where(values > 1e-14 * scale, values, 0.0)


def _run_stage(rx: Relaxer, values: np.ndarray, delta: float, tol: float, max_sweeps: int,
               trace: list[float] | None) -> dict[str, Any]:
    fields = rx.fields
    E = float(np.sum(cell_energies(values, fields, delta)))
    E_start = E
    sweeps = 0
    converged = False
    change = math.inf
    monotone = True
    while sweeps < max_sweeps:
        change = rx.sweep(values, delta)
        sweeps += 1
        E_new = float(np.sum(cell_energies(values, fields, delta)))
        if E_new > E + 1e-12 * (1.0 + abs(E)):
            monotone = False
            log.error("energy increased during sweep %d: %r -> %r", sweeps, E, E_new)
        E = E_new
        if trace is not None:
            trace.append(E)
        if change <= tol:
            converged = True
            break
    return {"delta": delta, "h": fields.grid.h, "sweeps": sweeps, "converged": converged,
            "last_change": change, "energy_start": E_start, "energy_end": E, "monotone": monotone}


def solve(problem: Problem, options: SolveOptions = SolveOptions(),
          initial: GridFunction | None = None) -> Solution:
    """Relax from the clamped multilinear extension of the boundary data.

    With ``initial`` the given function is used as the starting point on the
    finest grid and the coarse levels and mollified stages are skipped, so a
    converged solution is a fixed point.
    """
    grid, bd, kernel = problem.grid, problem.boundary, problem.kernel
    opts = options.resolved(grid, bd.sup)
    sigma = slope_scale(kernel, grid.cell_centers().reshape(-1, grid.dim))
    stages: list[dict[str, Any]] = []
    trace: list[float] = []

    if initial is not None:
        if initial.grid != grid:
            raise SolverError("initial guess lives on a different grid")
        levels = [grid]
        values = np.maximum(initial.values.copy(), 0.0)
        values[grid.boundary_mask] = bd.phi
    else:
        levels = _level_grids(grid, opts.continuation_levels)
        cbd = bd if levels[0] == grid else bd.restrict(levels[0])
        values = _clamp(coons_extension(cbd), cbd.sup)

    for li, g in enumerate(levels):
        finest = li == len(levels) - 1
        gbd = bd if finest else bd.restrict(g)
        if li > 0:
            coarse = GridFunction(levels[li - 1], values)
            values = _clamp(interpolate(coarse, g.coords()), gbd.sup)
            values[g.boundary_mask] = gbd.phi
        fields = CellFields(kernel, g)
        rx = Relaxer(fields, opts)
        if opts.mollify and initial is None:
            for delta in mollify_ladder(g, opts.mollify_start, sigma):
                st = _run_stage(rx, values, delta, opts.tol, opts.max_sweeps, None)
                st["level"] = li
                stages.append(st)
        if finest or not opts.mollify:
            st = _run_stage(rx, values, 0.0, opts.tol, opts.max_sweeps, trace if finest else None)
            st["level"] = li
            stages.append(st)

    final = stages[-1]
    u = GridFunction(grid, values)
    meta = {
        "kernel": kernel.describe(), "grid": grid.describe(), "options": opts.to_dict(),
        "omega": opts.omega_for(grid), "slope_scale": sigma, "stages": stages,
        "initial_energy": final["energy_start"], "total_sweeps": int(sum(s["sweeps"] for s in stages)),
        "p_at_least_n": bool(kernel.p >= grid.dim),
    }
    if not final["converged"]:
        log.warning("solve did not converge in %d sweeps (last change %.3e > tol %.3e)",
                    final["sweeps"], final["last_change"], opts.tol)
    return Solution(u, trace, final["sweeps"], bool(final["converged"]), meta)


def trapping_check(problem: Problem, reference: Solution, options: SolveOptions = SolveOptions(),
                   seeds: Sequence[int] = (1, 2, 3), rtol: float = 1e-6) -> dict[str, Any]:
    """Re-solve under randomized sweep orders and compare with ``reference``.

    The energy is nonconvex through the jump term, so different orders can
    settle in different critical points. A re-solve reaching an energy lower
    than the reference by more than ``rtol`` relative flags it as trapped.
    """
    E0 = reference.final_energy
    runs = []
    for seed in seeds:
        opts = replace(options, sweep_order="randomized", seed=int(seed))
        sol = solve(problem, opts)
        runs.append({
            "seed": int(seed), "energy": sol.final_energy, "converged": sol.converged,
            "max_difference": float(np.max(np.abs(sol.u.values - reference.u.values))),
            "phase_mismatch": int(np.count_nonzero(sol.phase != reference.phase)),
        })
    best = min(r["energy"] for r in runs)
    return {"reference_energy": E0, "runs": runs, "best_energy": best,
            "trapped": bool(best < E0 - rtol * (1.0 + abs(E0)))}


# ---------------------------------------------------------------------------
# serialization


def write_solution(sol: Solution, directory: str | Path) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csv_path = write_csv(sol.u, d / "u.csv")
    side = {
        "converged": sol.converged, "sweeps_used": sol.sweeps_used,
        "final_energy": sol.final_energy, "energy_trace": sol.energy_trace,
        "options": sol.metadata.get("options"), "kernel": sol.metadata.get("kernel"),
        "grid": sol.grid.describe(), "metadata": {k: v for k, v in sol.metadata.items()
                                                  if k not in ("options", "kernel", "grid")},
    }
    json_path = d / "solution.json"
    json_path.write_text(dumps(side), encoding="utf-8")
    return [csv_path, json_path]


def read_solution(directory: str | Path) -> Solution:
    d = Path(directory)
    csv_path, json_path = d / "u.csv", d / "solution.json"
    if not csv_path.is_file() or not json_path.is_file():
        raise FileNotFoundError(f"no solution artifacts in {d}")
    side = json.loads(json_path.read_text(encoding="utf-8"))
    gd = side["grid"]
    grid = Grid(tuple(gd["origin"]), tuple(gd["extent"]), tuple(gd["nodes"]))
    u = read_csv(csv_path, grid)
    meta = dict(side.get("metadata", {}))
    meta.update({"options": side.get("options"), "kernel": side.get("kernel"),
                 "grid": side["grid"]})
    return Solution(u, [float(e) for e in side["energy_trace"]], int(side["sweeps_used"]),
                    bool(side["converged"]), meta)
