"""Uniform rectangular grids in one or two dimensions.

Nodes are stored in ``ij`` order (axis 0 is x). Cells are the tensor-product
intervals between neighbouring nodes; a cell is addressed by its lowest
corner node. Gradients, quadrature and the phase of a grid function are all
taken at cell centres, using the multilinear element on the cell.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


class GridError(ValueError):
    pass


def _tuple(x, dim: int, name: str) -> tuple:
    t = tuple(np.atleast_1d(np.asarray(x)).tolist())
    if len(t) == 1 and dim > 1:
        t = t * dim
    if len(t) != dim:
        raise GridError(f"{name} must have {dim} entries, got {t}")
    return t


@dataclass(frozen=True)
class Grid:
    origin: tuple[float, ...]
    extent: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        if len(self.nodes) not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {len(self.nodes)}")
        if any(n < 3 for n in self.nodes):
            raise GridError(f"need at least 3 nodes per axis, got {self.nodes}")
        if any(not (e > 0 and math.isfinite(e)) for e in self.extent):
            raise GridError(f"extent must be positive, got {self.extent}")
        hs = [e / (n - 1) for e, n in zip(self.extent, self.nodes)]
        if max(hs) - min(hs) > 1e-12 * max(hs):
            raise GridError(f"spacing must be uniform across axes, got {hs}")

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> float:
        return self.extent[0] / (self.nodes[0] - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.nodes)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.nodes)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + np.asarray(self.extent, dtype=float)

    def axes(self) -> list[np.ndarray]:
        return [o + self.h * np.arange(n) for o, n in zip(self.origin, self.nodes)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``nodes + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def cell_centers(self) -> np.ndarray:
        ax = [a[:-1] + 0.5 * self.h for a in self.axes()]
        return np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for d in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask

    def coarsen(self, factor: int = 2) -> "Grid":
        if any((n - 1) % factor for n in self.nodes):
            raise GridError(f"cannot coarsen {self.nodes} by {factor}")
        return Grid(self.origin, self.extent, tuple((n - 1) // factor + 1 for n in self.nodes))

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.origin, self.extent, tuple((n - 1) * factor + 1 for n in self.nodes))

    def contains(self, X, slack: float = 1e-12) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        s = slack * (1.0 + np.asarray(self.extent))
        return np.all((X >= self.lower - s) & (X <= self.upper + s), axis=-1)

    def distance_to_boundary(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.min(np.minimum(X - self.lower, self.upper - X), axis=-1)

    def describe(self) -> dict:
        return {"dim": self.dim, "origin": list(self.origin), "extent": list(self.extent),
                "nodes": list(self.nodes), "h": self.h}


def build_grid(dim: int, origin, extent, nodes) -> Grid:
    if dim not in (1, 2):
        raise GridError(f"dimension must be 1 or 2, got {dim}")
    origin = tuple(float(v) for v in _tuple(origin, dim, "origin"))
    extent = tuple(float(v) for v in _tuple(extent, dim, "extent"))
    nodes = tuple(int(v) for v in _tuple(nodes, dim, "nodes"))
    return Grid(origin, extent, nodes)


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("grid function has non-finite values")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, fn(grid.coords()))

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())


@dataclass
class BoundaryData:
    """Dirichlet trace: values on the boundary nodes in ``np.flatnonzero`` order."""

    grid: Grid
    phi: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        nb = int(self.grid.boundary_mask.sum())
        if self.phi.shape != (nb,):
            raise GridError(f"expected {nb} boundary values, got {self.phi.shape}")
        if not np.all(np.isfinite(self.phi)):
            raise GridError("boundary data must be finite")
        if np.any(self.phi < 0):
            raise GridError("boundary data must be nonnegative")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "BoundaryData":
        vals = np.asarray(fn(grid.coords()), dtype=float)
        return cls(grid, vals[grid.boundary_mask])

    @classmethod
    def from_values(cls, grid: Grid, full: np.ndarray) -> "BoundaryData":
        return cls(grid, np.asarray(full, dtype=float)[grid.boundary_mask])

    def full(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.grid.shape, fill, dtype=float)
        out[self.grid.boundary_mask] = self.phi
        return out

    @property
    def sup(self) -> float:
        return float(self.phi.max()) if self.phi.size else 0.0

    def restrict(self, coarse: Grid) -> "BoundaryData":
        """Inject onto a coarsened grid of the same box."""
        factor = (self.grid.nodes[0] - 1) // (coarse.nodes[0] - 1)
        sl = tuple(slice(None, None, factor) for _ in range(coarse.dim))
        return BoundaryData.from_values(coarse, self.full()[sl])


# ---------------------------------------------------------------------------
# finite elements on cells


def corner_offsets(dim: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=dim))


def corner_weights(dim: int, h: float) -> dict[tuple[int, ...], np.ndarray]:
    """d(grad at cell centre)/d(corner value) for each corner offset."""
    scale = 1.0 / (h * 2 ** (dim - 1))
    return {a: np.array([(2 * ad - 1) * scale for ad in a]) for a in corner_offsets(dim)}


def _corner(values: np.ndarray, a: tuple[int, ...]) -> np.ndarray:
    return values[tuple(slice(ad, ad + n - 1) for ad, n in zip(a, values.shape))]


def cell_values(values: np.ndarray) -> np.ndarray:
    """Multilinear interpolant at cell centres (mean of the corner values)."""
    dim = values.ndim
    out = sum(_corner(values, a) for a in corner_offsets(dim))
    return out / 2 ** dim


def cell_gradients(values: np.ndarray, h: float) -> np.ndarray:
    """Gradient of the multilinear element at every cell centre, shape ``cells + (dim,)``.

    Along each axis this is the mean of the forward differences over the
    cell's corner pairs.
    """
    dim = values.ndim
    comps = []
    for d in range(dim):
        hi = [slice(None)] * dim
        lo = [slice(None)] * dim
        hi[d] = slice(1, None)
        lo[d] = slice(None, -1)
        diff = (values[tuple(hi)] - values[tuple(lo)]) / h
        for e in range(dim):
            if e != d:
                a = [slice(None)] * dim
                b = [slice(None)] * dim
                a[e] = slice(1, None)
                b[e] = slice(None, -1)
                diff = 0.5 * (diff[tuple(a)] + diff[tuple(b)])
        comps.append(diff)
    return np.stack(comps, axis=-1)


def _cell_index(grid: Grid, cell) -> tuple[int, ...]:
    cell = tuple(int(c) for c in np.atleast_1d(cell))
    if len(cell) != grid.dim or any(not 0 <= c < n for c, n in zip(cell, grid.cell_shape)):
        raise GridError(f"cell index {cell} out of range for cells {grid.cell_shape}")
    return cell


def cell_gradient(u: GridFunction, cell) -> np.ndarray:
    idx = _cell_index(u.grid, cell)
    block = u.values[tuple(slice(c, c + 2) for c in idx)]
    return cell_gradients(block, u.grid.h)[(0,) * u.grid.dim]


def interpolate(u: GridFunction, X) -> np.ndarray | float:
    """Multilinear interpolation at points ``X`` (shape ``(..., dim)``)."""
    g = u.grid
    X = np.asarray(X, dtype=float)
    scalar = X.ndim == 1 and g.dim > 1 or X.ndim == 0
    if g.dim == 1 and (X.ndim == 0 or X.shape[-1] != 1):
        X = X[..., None]
    Xf = X.reshape(-1, g.dim)
    if not np.all(g.contains(Xf)):
        raise GridError("interpolation point outside the grid hull")
    t = (Xf - g.lower) / g.h
    i0 = np.clip(np.floor(t).astype(int), 0, np.asarray(g.nodes) - 2)
    s = np.clip(t - i0, 0.0, 1.0)
    out = np.zeros(len(Xf))
    for a in corner_offsets(g.dim):
        w = np.ones(len(Xf))
        for d, ad in enumerate(a):
            w = w * (s[:, d] if ad else 1.0 - s[:, d])
        out += w * u.values[tuple(i0[:, d] + a[d] for d in range(g.dim))]
    out = out.reshape(X.shape[:-1])
    return float(out) if scalar or out.ndim == 0 else out


def ball_mask(grid: Grid, center, r: float) -> np.ndarray:
    """Cells whose centres lie within distance r of ``center``."""
    if r < 2 * grid.h * (1 - 1e-12):
        raise GridError(f"ball radius {r} is below 2h = {2 * grid.h}; refine the grid or enlarge r")
    c = np.asarray(center, dtype=float).reshape(grid.dim)
    d2 = np.sum((grid.cell_centers() - c) ** 2, axis=-1)
    return d2 <= r * r * (1 + 1e-12)


def node_ball_mask(grid: Grid, center, r: float) -> np.ndarray:
    c = np.asarray(center, dtype=float).reshape(grid.dim)
    return np.sum((grid.coords() - c) ** 2, axis=-1) <= r * r * (1 + 1e-12)


def discrete_volume(grid: Grid, cell_mask: np.ndarray) -> float:
    return float(np.count_nonzero(cell_mask)) * grid.cell_volume


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def integrate(u: GridFunction, mask: np.ndarray | None = None, grid: Grid | None = None) -> float:
    """Midpoint rule: cell-centre values times h^n, summed over ``mask``."""
    if grid is not None and grid != u.grid:
        raise GridError("mask and grid function live on different grids")
    vals = cell_values(u.values)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != vals.shape:
            raise GridError(f"cell mask shape {mask.shape} does not match cells {vals.shape}")
        vals = vals[mask]
    return float(vals.sum()) * u.grid.cell_volume


def prolong(coarse: GridFunction, fine: Grid) -> GridFunction:
    """Multilinear prolongation onto a nested finer grid."""
    return GridFunction(fine, interpolate(coarse, fine.coords()))


def coons_extension(bd: BoundaryData) -> np.ndarray:
    """Transfinite multilinear extension of boundary data into the interior."""
    g = bd.grid
    full = bd.full()
    if g.dim == 1:
        s = np.linspace(0.0, 1.0, g.nodes[0])
        return (1 - s) * full[0] + s * full[-1]
    s = np.linspace(0.0, 1.0, g.nodes[0])[:, None]
    t = np.linspace(0.0, 1.0, g.nodes[1])[None, :]
    left, right = full[0, :][None, :], full[-1, :][None, :]
    bottom, top = full[:, 0][:, None], full[:, -1][:, None]
    corners = ((1 - s) * (1 - t) * full[0, 0] + s * (1 - t) * full[-1, 0]
               + (1 - s) * t * full[0, -1] + s * t * full[-1, -1])
    return (1 - s) * left + s * right + (1 - t) * bottom + t * top - corners


# ---------------------------------------------------------------------------
# CSV serialization


def write_csv(u: GridFunction, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X = u.grid.coords().reshape(-1, u.grid.dim)
    v = u.values.reshape(-1)
    header = "x,y,value" if u.grid.dim == 2 else "x,value"
    lines = [header]
    for row, val in zip(X, v):
        lines.append(",".join(f"{c:.17g}" for c in row) + f",{val:.17g}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path: str | Path, grid: Grid | None = None) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = data.shape[1] - 1
    if grid is None:
        axes = [np.unique(data[:, d]) for d in range(dim)]
        extent = [a[-1] - a[0] for a in axes]
        grid = build_grid(dim, [a[0] for a in axes], extent, [len(a) for a in axes])
    if data.shape[0] != int(np.prod(grid.shape)):
        raise GridError(f"{path}: expected {np.prod(grid.shape)} rows, got {data.shape[0]}")
    return GridFunction(grid, data[:, -1].reshape(grid.shape))
