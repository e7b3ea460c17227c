"""Experiment configuration: a flat key-tree text format with a typed schema.

One assignment per line, ``dotted.key = value``, where the value is a JSON
literal (bare words are read as strings). ``#`` starts a comment. Example::

    kernel.form = prototype
    kernel.p = 2
    grid.nodes = [201, 201]

Every key must appear in :data:`SCHEMA`; errors name the offending key.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .grid import BoundaryData, Grid, build_grid
from .kernel import (AffineMatrix, AffineScalar, ConstantMatrix, ConstantScalar, Kernel,
                     KernelError, RotatedAnisotropic, SampledTable, SinusoidalMatrix,
                     SinusoidalScalar, StructuralParams, TableMatrix, TableScalar)
from .minimizer import Problem, SolveOptions
from .oracle import oracle_1d

_BARE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-/]*$")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Key:
    kind: str
    default: Any = None
    help: str = ""
    choices: tuple | None = None


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


_CHECK: dict[str, Callable[[Any], bool]] = {
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "float": _num,
    "bool": lambda v: isinstance(v, bool),
    "str": lambda v: isinstance(v, str),
    "vector": lambda v: isinstance(v, list) and all(_num(x) for x in v),
    # matrix and tensor keys default to null, meaning identity or zero slopes
    "matrix": lambda v: v is None or (isinstance(v, list) and all(isinstance(r, list) and all(_num(x) for x in r) for r in v)),
    "tensor": lambda v: v is None or (isinstance(v, list) and all(isinstance(m, list) for m in v)),
    "points": lambda v: v == "auto" or (isinstance(v, list) and all(isinstance(p, list) and all(_num(x) for x in p) for p in v)),
    "radii": lambda v: v == "auto" or (isinstance(v, list) and all(_num(x) for x in v)),
    "strlist": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
    "omega": lambda v: v == "auto" or _num(v),
    "optfloat": lambda v: v is None or _num(v),
    "optint": lambda v: v is None or (isinstance(v, int) and not isinstance(v, bool)),
}

FIELD_FAMILIES = ("constant", "affine", "sinusoidal", "rotated-anisotropic", "table")
BOUNDARY_FAMILIES = ("planar-trace", "edge-constant", "radial-trace", "table")
ANALYSIS_CHECKS = ("norms", "el_residual", "growth", "nondegeneracy", "density", "lambda",
                   "perimeter", "blowup", "fbc")


def _field_keys(name: str, scalar: bool) -> dict[str, Key]:
    keys = {
        f"kernel.{name}.family": Key("str", "constant", f"family of the {name} field", FIELD_FAMILIES),
        f"kernel.{name}.amp": Key("float", 0.0, "sinusoidal amplitude"),
        f"kernel.{name}.k": Key("vector", [0.0, 0.0], "sinusoidal wave vector"),
        f"kernel.{name}.phase": Key("float", 0.0, "sinusoidal phase"),
    }
    if scalar:
        keys.update({
            f"kernel.{name}.value": Key("float", 1.0 if name == "Q" else 0.0, "constant value"),
            f"kernel.{name}.c0": Key("float", 1.0 if name == "Q" else 0.0, "affine/sinusoidal offset"),
            f"kernel.{name}.c": Key("vector", [0.0, 0.0], "affine gradient"),
        })
    else:
        keys.update({
            f"kernel.{name}.matrix": Key("matrix", None, "constant matrix (default identity)"),
            f"kernel.{name}.A0": Key("matrix", None, "affine/sinusoidal base matrix"),
            f"kernel.{name}.slopes": Key("tensor", None, "affine slope matrices, one per axis"),
            f"kernel.{name}.l1": Key("float", 1.0, "rotated-anisotropic eigenvalue"),
            f"kernel.{name}.l2": Key("float", 1.0, "rotated-anisotropic eigenvalue"),
            f"kernel.{name}.theta0": Key("float", 0.0, "rotation angle at the origin"),
            f"kernel.{name}.dtheta": Key("vector", [0.0, 0.0], "rotation angle gradient"),
        })
    return keys


SCHEMA: dict[str, Key] = {
    "experiment.name": Key("str", "experiment", "label used in the summary"),
    "experiment.seed": Key("int", 0, "seed for every randomized step"),
    "output.dir": Key("str", "out", "artifact directory, relative to the output root"),
    "kernel.form": Key("str", "prototype", "integrand form", ("prototype", "jetflow")),
    "kernel.p": Key("float", 2.0, "gradient growth exponent, p >= 2"),
    "kernel.m": Key("float", 1.0, "lower-order exponent, 1 <= m < p"),
    "kernel.lambda": Key("float", 1.0, "ellipticity constant"),
    "kernel.K": Key("float", 1.0, "bound on |f|"),
    "kernel.eps_Q": Key("float", 0.1, "Q must lie in (eps_Q, 1/eps_Q)"),
    "kernel.beta_Q": Key("float", 1.0, "Hoelder exponent of Q"),
    "kernel.kappa": Key("float", 1.0, "normalization in <A grad u, grad u> = kappa Q"),
    "kernel.table": Key("str", "", "CSV field table (x,y,a11,a12,a22,f,Q) for table families"),
    **_field_keys("A", scalar=False),
    **_field_keys("f", scalar=True),
    **_field_keys("Q", scalar=True),
    "grid.dim": Key("int", 2, "spatial dimension", (1, 2)),
    "grid.origin": Key("vector", [0.0, 0.0], "lower corner"),
    "grid.extent": Key("vector", [1.0, 1.0], "box side lengths"),
    "grid.nodes": Key("vector", [101, 101], "nodes per axis"),
    "boundary.family": Key("str", "planar-trace", "Dirichlet data family", BOUNDARY_FAMILIES),
    "boundary.from_oracle": Key("bool", False, "planar-trace: take slope and offset from the 1-D oracle"),
    "boundary.b": Key("float", 0.5, "planar-trace with oracle: value on the far edge"),
    "boundary.slope": Key("float", 1.0, "planar/radial trace slope"),
    "boundary.normal": Key("vector", [0.0, 1.0], "planar-trace unit normal"),
    "boundary.offset": Key("float", 0.5, "planar-trace offset: slope * (<X, normal> - offset)+"),
    "boundary.center": Key("vector", [0.0, 0.0], "radial-trace disk center"),
    "boundary.radius": Key("float", 1.0, "radial-trace disk radius"),
    "boundary.left": Key("float", 0.0, "edge-constant value at x = min"),
    "boundary.right": Key("float", 0.0, "edge-constant value at x = max"),
    "boundary.bottom": Key("float", 0.0, "edge-constant value at y = min"),
    "boundary.top": Key("float", 0.0, "edge-constant value at y = max"),
    "boundary.path": Key("str", "", "table: CSV x,y,value covering the boundary nodes"),
    "solve.tol": Key("optfloat", None, "max nodal change at convergence (default 1e-8 sup phi)"),
    "solve.max_sweeps": Key("optint", None, "sweep limit per stage (default 50 max nodes)"),
    "solve.sweep_order": Key("str", "two-color", "relaxation order", ("two-color", "lexicographic", "randomized")),
    "solve.line_search_tol": Key("float", 1e-12, "golden-section tolerance"),
    "solve.continuation_levels": Key("int", 1, "number of grid levels"),
    "solve.mollify": Key("bool", False, "smoothed-jump continuation before the exact stage"),
    "solve.mollify_start": Key("optfloat", None, "first smoothing width in length units (default box size / 4)"),
    "solve.omega": Key("omega", "auto", "over-relaxation factor in the positive phase"),
    "analysis.enabled": Key("bool", True, "run the analysis stage"),
    "analysis.checks": Key("strlist", list(ANALYSIS_CHECKS), "which measurements to run"),
    "analysis.centers": Key("points", "auto", "free boundary centers or auto"),
    "analysis.n_centers": Key("int", 5, "number of auto centers"),
    "analysis.radii": Key("radii", "auto", "radius ladder or auto (dyadic from 8h)"),
    "analysis.d0": Key("float", 0.1, "linear growth window"),
    "flatness.enabled": Key("bool", False, "run the flatness cascade"),
    "flatness.center": Key("points", "auto", "cascade center ([[x, y]]) or auto"),
    "flatness.r0": Key("float", 0.5, "initial cascade radius"),
    "flatness.rtilde": Key("float", 0.5, "radius ratio between levels"),
    "flatness.levels": Key("int", 3, "deepest level K"),
    "plots.enabled": Key("bool", True, "render PNG figures"),
}


def _literal(text: str, key: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if _BARE.match(text):
            return text
        raise ConfigError(key, f"cannot parse value {text!r}")


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def parse(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(key, f"duplicate key (line {n})")
        out[key] = _literal(val, key)
    return out


def validate(raw: dict[str, Any]) -> dict[str, Any]:
    cfg = {k: (list(v.default) if isinstance(v.default, list) else v.default) for k, v in SCHEMA.items()}
    for key, val in raw.items():
        spec = SCHEMA.get(key)
        if spec is None:
            raise ConfigError(key, "unknown key")
        if spec.kind == "float" and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not _CHECK[spec.kind](val):
            raise ConfigError(key, f"expected {spec.kind}, got {val!r}")
        if spec.choices is not None and val not in spec.choices:
            raise ConfigError(key, f"must be one of {list(spec.choices)}, got {val!r}")
        cfg[key] = val
    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: dict[str, Any]) -> None:
    p, m = cfg["kernel.p"], cfg["kernel.m"]
    if not p >= 2:
        raise ConfigError("kernel.p", f"must be >= 2, got {p}")
    if not 1 <= m < p:
        raise ConfigError("kernel.m", f"must satisfy 1 <= m < p = {p}, got {m}")
    if not cfg["kernel.lambda"] > 0:
        raise ConfigError("kernel.lambda", "must be positive")
    if not cfg["kernel.K"] > 0:
        raise ConfigError("kernel.K", "must be positive")
    if not 0 < cfg["kernel.eps_Q"] < 1:
        raise ConfigError("kernel.eps_Q", "must lie in (0, 1)")
    if not 0 < cfg["kernel.beta_Q"] <= 1:
        raise ConfigError("kernel.beta_Q", "must lie in (0, 1]")
    if cfg["kernel.form"] == "jetflow" and p != 2:
        raise ConfigError("kernel.p", "jetflow form requires p = 2")
    dim = cfg["grid.dim"]
    for key in ("grid.origin", "grid.extent", "grid.nodes"):
        if len(cfg[key]) != dim:
            raise ConfigError(key, f"needs {dim} entries")
    if any(n < 3 or int(n) != n for n in cfg["grid.nodes"]):
        raise ConfigError("grid.nodes", "node counts must be integers >= 3")
    if any(not e > 0 for e in cfg["grid.extent"]):
        raise ConfigError("grid.extent", "extents must be positive")
    if cfg["solve.continuation_levels"] < 1:
        raise ConfigError("solve.continuation_levels", "must be >= 1")
    if cfg["solve.omega"] != "auto" and not 0 < cfg["solve.omega"] < 2:
        raise ConfigError("solve.omega", "must lie in (0, 2)")
    for c in cfg["analysis.checks"]:
        if c not in ANALYSIS_CHECKS:
            raise ConfigError("analysis.checks", f"unknown check {c!r}")
    if not 0 < cfg["flatness.rtilde"] < 1:
        raise ConfigError("flatness.rtilde", "must lie in (0, 1)")
    if cfg["flatness.levels"] < 0:
        raise ConfigError("flatness.levels", "must be >= 0")
    n = cfg["boundary.normal"]
    if cfg["boundary.family"] == "planar-trace" and len(n) != dim:
        raise ConfigError("boundary.normal", f"needs {dim} entries")


def load(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    cfg = validate(parse(text))
    cfg["_path"] = str(path)
    return cfg


def dumps(cfg: dict[str, Any]) -> str:
    """Canonical text form: every schema key, sorted."""
    return "".join(f"{k} = {json.dumps(cfg[k])}\n" for k in sorted(SCHEMA))


def schema_text() -> str:
    lines = []
    for k in sorted(SCHEMA):
        s = SCHEMA[k]
        ch = f" one of {list(s.choices)}" if s.choices else ""
        lines.append(f"{k} : {s.kind} = {json.dumps(s.default)}{ch}  # {s.help}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# builders


def _relpath(cfg, p: str) -> str:
    base = Path(cfg.get("_path", ".")).parent
    q = Path(p)
    return str(q if q.is_absolute() else base / q)


def _matrix(cfg, key, dim):
    v = cfg[key]
    return tuple(map(tuple, np.eye(dim) if v is None else np.asarray(v, dtype=float)))


def _scalar_field(cfg, name: str, dim: int, table):
    pre = f"kernel.{name}"
    fam = cfg[f"{pre}.family"]
    if fam == "constant":
        return ConstantScalar(cfg[f"{pre}.value"], dim)
    if fam == "affine":
        return AffineScalar(cfg[f"{pre}.c0"], tuple(cfg[f"{pre}.c"][:dim]), dim)
    if fam == "sinusoidal":
        return SinusoidalScalar(cfg[f"{pre}.c0"], cfg[f"{pre}.amp"], tuple(cfg[f"{pre}.k"][:dim]),
                                cfg[f"{pre}.phase"], dim)
    if fam == "table":
        return TableScalar(table(), name)
    raise ConfigError(f"{pre}.family", f"family {fam!r} is not available for scalar fields")


def _matrix_field(cfg, dim: int, table):
    pre = "kernel.A"
    fam = cfg[f"{pre}.family"]
    if fam == "constant":
        return ConstantMatrix(_matrix(cfg, f"{pre}.matrix", dim), dim)
    if fam == "affine":
        S = cfg[f"{pre}.slopes"]
        if S is None:
            S = np.zeros((dim, dim, dim)).tolist()
        return AffineMatrix(_matrix(cfg, f"{pre}.A0", dim),
                            tuple(tuple(map(tuple, s)) for s in S), dim)
    if fam == "sinusoidal":
        return SinusoidalMatrix(_matrix(cfg, f"{pre}.A0", dim), cfg[f"{pre}.amp"],
                                tuple(cfg[f"{pre}.k"][:dim]), cfg[f"{pre}.phase"], dim)
    if fam == "rotated-anisotropic":
        if dim != 2:
            raise ConfigError(f"{pre}.family", "rotated-anisotropic needs dim = 2")
        return RotatedAnisotropic(cfg[f"{pre}.l1"], cfg[f"{pre}.l2"], cfg[f"{pre}.theta0"],
                                  tuple(cfg[f"{pre}.dtheta"]))
    if fam == "table":
        return TableMatrix(table())
    raise ConfigError(f"{pre}.family", f"unknown family {fam!r}")


def build_kernel(cfg: dict[str, Any]) -> Kernel:
    dim = cfg["grid.dim"]
    cache: dict[str, SampledTable] = {}

    def table():
        if not cfg["kernel.table"]:
            raise ConfigError("kernel.table", "table family needs kernel.table")
        if "t" not in cache:
            cache["t"] = SampledTable(_relpath(cfg, cfg["kernel.table"]))
        return cache["t"]

    try:
        params = StructuralParams(cfg["kernel.p"], cfg["kernel.m"], cfg["kernel.lambda"],
                                  cfg["kernel.K"], cfg["kernel.eps_Q"], cfg["kernel.beta_Q"])
        lo = tuple(cfg["grid.origin"])
        hi = tuple(o + e for o, e in zip(cfg["grid.origin"], cfg["grid.extent"]))
        return Kernel(params, _matrix_field(cfg, dim, table), _scalar_field(cfg, "f", dim, table),
                      _scalar_field(cfg, "Q", dim, table), cfg["kernel.form"], dim,
                      cfg["kernel.kappa"], (lo, hi))
    except KernelError as exc:
        raise ConfigError("kernel", str(exc)) from exc


def build_grid_from(cfg: dict[str, Any]) -> Grid:
    try:
        return build_grid(cfg["grid.dim"], cfg["grid.origin"], cfg["grid.extent"],
                          [int(n) for n in cfg["grid.nodes"]])
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc


def planar_trace_params(cfg: dict[str, Any], kernel: Kernel, grid: Grid) -> tuple[float, np.ndarray, float]:
    nu = np.asarray(cfg["boundary.normal"], dtype=float)
    if abs(np.linalg.norm(nu) - 1) > 1e-12:
        raise ConfigError("boundary.normal", "must be a unit vector")
    if not cfg["boundary.from_oracle"]:
        return cfg["boundary.slope"], nu, cfg["boundary.offset"]
    # the x-invariant problem across the box along nu reduces to the 1-D oracle
    coords = grid.coords().reshape(-1, grid.dim) @ nu
    lo, hi = float(coords.min()), float(coords.max())
    X0 = grid.lower + 0.5 * np.asarray(grid.extent)
    if kernel.form != "prototype":
        raise ConfigError("boundary.from_oracle", "the oracle convention is the prototype form")
    q = float(kernel.Q(X0)) / float(kernel.G(X0, nu))
    o = oracle_1d(kernel.p, q, cfg["boundary.b"], hi - lo)
    return o.slope, nu, lo + o.fb_position


def build_boundary(cfg: dict[str, Any], kernel: Kernel, grid: Grid) -> BoundaryData:
    fam = cfg["boundary.family"]
    if fam == "planar-trace":
        s, nu, off = planar_trace_params(cfg, kernel, grid)
        return BoundaryData.from_function(grid, lambda X: s * np.maximum(X @ nu - off, 0.0))
    if fam == "radial-trace":
        c = np.asarray(cfg["boundary.center"], dtype=float)
        R, s = cfg["boundary.radius"], cfg["boundary.slope"]
        if grid.dim != 2:
            raise ConfigError("boundary.family", "radial-trace is two-dimensional")

        def phi(X):
            rho = np.linalg.norm(X - c, axis=-1)
            return s * R * np.log(np.maximum(rho / R, 1.0))

        return BoundaryData.from_function(grid, phi)
    if fam == "edge-constant":
        full = np.zeros(grid.shape)
        vals = {"left": cfg["boundary.left"], "right": cfg["boundary.right"],
                "bottom": cfg["boundary.bottom"], "top": cfg["boundary.top"]}
        if any(v < 0 for v in vals.values()):
            raise ConfigError("boundary", "edge values must be nonnegative")
        if grid.dim == 1:
            full[0], full[-1] = vals["left"], vals["right"]
        else:
            full[:, 0], full[:, -1] = vals["bottom"], vals["top"]
            full[0, :], full[-1, :] = vals["left"], vals["right"]
        return BoundaryData.from_values(grid, full)
    if fam == "table":
        if not cfg["boundary.path"]:
            raise ConfigError("boundary.path", "table family needs a path")
        data = np.loadtxt(_relpath(cfg, cfg["boundary.path"]), delimiter=",", skiprows=1, ndmin=2)
        lookup = {tuple(np.round(r[:-1], 12)): r[-1] for r in data}
        X = grid.coords()[grid.boundary_mask]
        try:
            phi = [lookup[tuple(np.round(x, 12))] for x in X]
        except KeyError as exc:
            raise ConfigError("boundary.path", f"no value for boundary node {exc.args[0]}") from exc
        return BoundaryData(grid, np.asarray(phi))
    raise ConfigError("boundary.family", f"unknown family {fam!r}")


def build_problem(cfg: dict[str, Any]) -> Problem:
    kernel = build_kernel(cfg)
    grid = build_grid_from(cfg)
    try:
        bd = build_boundary(cfg, kernel, grid)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("boundary", str(exc)) from exc
    return Problem(kernel, grid, bd)


def build_options(cfg: dict[str, Any]) -> SolveOptions:
    try:
        return SolveOptions(tol=cfg["solve.tol"], max_sweeps=cfg["solve.max_sweeps"],
                            sweep_order=cfg["solve.sweep_order"], seed=cfg["experiment.seed"],
                            line_search_tol=cfg["solve.line_search_tol"],
                            continuation_levels=cfg["solve.continuation_levels"],
                            mollify=cfg["solve.mollify"], mollify_start=cfg["solve.mollify_start"],
                            omega=cfg["solve.omega"])
    except ValueError as exc:
        raise ConfigError("solve", str(exc)) from exc


def dyadic_radii(h: float, dist: float, octaves: int = 5) -> list[float]:
    """8h, 16h, ... up to dist / 2, at most ``octaves + 1`` radii."""
    out = []
    r = 8 * h
    while r <= dist / 2 * (1 + 1e-12) and len(out) <= octaves:
        out.append(r)
        r *= 2
    return out


def isclose(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)
