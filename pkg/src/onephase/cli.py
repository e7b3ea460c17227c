"""Command line runner: ``onephase {run,solve,analyze,flatness,oracle,verify-kernel,schema}``.

Exit codes: 0 success, 1 failed kernel verification, 2 configuration error,
3 solver non-convergence (artifacts are still written), 4 staging error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import shutil
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import config as C
from .analysis import (AnalysisError, blow_up_cauchy, density_profile, euler_lagrange_residual,
                       extract_free_boundary, fbc_check, interior_mask, lambda_report,
                       linear_growth_constant, nondegeneracy_profile, norm_report,
                       perimeter_profile, residual_sup)
from .flatness import FlatnessError, improvement_cascade
from .kernel import SampleSpec, verify_structural_conditions
from .minimizer import Solution, read_solution, solve, write_solution
from .oracle import OracleError, brute_force_1d, oracle_1d
from .report import dumps, jsonable, write_json

log = logging.getLogger("onephase")

EXIT_OK, EXIT_VERIFY, EXIT_SCHEMA, EXIT_NONCONVERGED, EXIT_STAGING = 0, 1, 2, 3, 4
OUTPUT_ROOT_ENV = "ONEPHASE_OUTPUT_ROOT"


class StagingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# artifact helpers


def output_dir(cfg: dict[str, Any], override: str | None) -> Path:
    if override:
        return Path(override)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    out = Path(cfg["output.dir"])
    return out if out.is_absolute() else root / out


def write_manifest(outdir: Path) -> Path:
    """sha256 and relative path of every file under ``outdir`` except MANIFEST."""
    rows = []
    for p in sorted(outdir.rglob("*")):
        if p.is_file() and p.name != "MANIFEST":
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            rows.append(f"{digest}  {p.relative_to(outdir).as_posix()}")
    path = outdir / "MANIFEST"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def write_series(path: Path, header: Sequence[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{float(v):.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _load_solution(outdir: Path, solution_dir: str | None) -> Solution:
    d = Path(solution_dir) if solution_dir else outdir / "solution"
    try:
        return read_solution(d)
    except FileNotFoundError as exc:
        raise StagingError(f"{exc}; run solve first") from exc


def _parse_point(text: str | None):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise C.ConfigError("--center", f"expected comma-separated numbers, got {text!r}") from exc


def _parse_list(text: str | None, key: str):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise C.ConfigError(key, f"expected comma-separated numbers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# stages


def stage_solve(cfg: dict[str, Any], outdir: Path) -> Solution:
    problem = C.build_problem(cfg)
    sol = solve(problem, C.build_options(cfg))
    write_solution(sol, outdir / "solution")
    write_series(outdir / "series" / "energy_trace.csv", ["sweep", "energy"],
                 enumerate(sol.energy_trace))
    return sol


def auto_radii(sol: Solution, fb) -> list[float]:
    g = sol.grid
    dist = g.distance_to_boundary(fb.points)
    return C.dyadic_radii(g.h, float(dist.max()))


def auto_centers(sol: Solution, fb, radii: Sequence[float], n: int) -> np.ndarray:
    """``n`` interface points far enough from the box for every radius, spread along the curve."""
    g = sol.grid
    need = max(radii) + 5 * g.h
    ok = np.flatnonzero(g.distance_to_boundary(fb.points) >= need)
    if ok.size == 0:
        raise AnalysisError(f"no free boundary point at distance {need:.3g} from the box boundary")
    order = ok[np.lexsort(fb.points[ok].T[::-1])]
    pick = np.unique(np.round(np.linspace(0, order.size - 1, min(n, order.size))).astype(int))
    return fb.points[order[pick]]


def _attempt(results: dict, name: str, fn):
    try:
        results[name] = fn()
    except (AnalysisError, ValueError) as exc:
        log.warning("analysis check %s skipped: %s", name, exc)
        results[name] = {"error": str(exc)}


def stage_analyze(cfg: dict[str, Any], sol: Solution, outdir: Path,
                  centers=None, radii=None) -> dict[str, Any]:
    kernel = C.build_kernel(cfg)
    g = sol.grid
    fb = extract_free_boundary(sol)
    fb.write(outdir)
    checks = cfg["analysis.checks"]
    res: dict[str, Any] = {"free_boundary": {"points": fb.size, "length": fb.length(),
                                             "ill_conditioned": int(fb.ill_conditioned.sum())}}
    if "norms" in checks:
        _attempt(res, "norms", lambda: norm_report(sol, fb=fb).metrics)
    if "el_residual" in checks:
        _attempt(res, "el_residual",
                 lambda: {"sup": residual_sup(euler_lagrange_residual(sol, kernel, fb))})
    if "growth" in checks:
        _attempt(res, "growth", lambda: {"d0": cfg["analysis.d0"], "constant": linear_growth_constant(
            sol, interior_mask(g, 2 * g.h), cfg["analysis.d0"], fb)})
    if fb.empty:
        log.warning("no free boundary: radial checks skipped")
        res["radial"] = {"error": "no free boundary"}
    else:
        radial = [c for c in ("nondegeneracy", "density", "perimeter", "lambda", "blowup") if c in checks]
        try:
            if radii is None:
                radii = auto_radii(sol, fb) if cfg["analysis.radii"] == "auto" else cfg["analysis.radii"]
            if centers is None:
                centers = (auto_centers(sol, fb, radii, cfg["analysis.n_centers"])
                           if cfg["analysis.centers"] == "auto" else np.asarray(cfg["analysis.centers"]))
        except AnalysisError as exc:
            log.warning("radial checks skipped: %s", exc)
            res["radial"] = {"error": str(exc)}
            radial = []
        if radial:
            res["radial"] = _radial(sol, kernel, fb, np.atleast_2d(centers), list(radii), radial, outdir)
        if "fbc" in checks:
            _attempt(res, "fbc", lambda: _fbc(sol, kernel, fb, outdir))
    write_json(outdir / "analysis.json", res)
    if cfg["plots.enabled"]:
        from . import plotting
        plotting.plot_solution(sol, fb, outdir / "figures" / "solution.png")
        plotting.plot_energy(sol.energy_trace, outdir / "figures" / "energy.png")
        prof = res.get("radial", {}).get("profiles")
        if prof:
            panels: dict[str, list] = {}
            for entry in prof:
                for k in ("nondegeneracy", "density", "perimeter", "lambda_scaled"):
                    if k in entry:
                        panels.setdefault(k, []).append((np.asarray(entry["radii"]), np.asarray(entry[k])))
            if panels:
                plotting.plot_profiles(panels, outdir / "figures" / "profiles.png")
        if isinstance(res.get("fbc"), dict) and "ratio_to_oracle" in res["fbc"]:
            plotting.plot_fbc(np.asarray(res["fbc"]["ratio_to_oracle"]),
                              outdir / "figures" / "fbc.png")
    return res


def _radial(sol, kernel, fb, centers, radii, which, outdir) -> dict[str, Any]:
    out: dict[str, Any] = {"radii": radii, "profiles": []}
    for i, Z in enumerate(centers):
        entry: dict[str, Any] = {"center": Z, "radii": radii}
        cols: dict[str, np.ndarray] = {}
        try:
            if "nondegeneracy" in which:
                cols["nondegeneracy"] = nondegeneracy_profile(sol, Z, radii, fb).values
            if "density" in which:
                cols["density"] = density_profile(sol, Z, radii, fb).values
            if "perimeter" in which:
                cols["perimeter"] = perimeter_profile(sol, Z, radii, fb).values
            if "lambda" in which:
                lam = lambda_report(sol, kernel, Z, radii, fb).metrics
                cols["lambda"] = np.asarray(lam["lambda"]["values"])
                cols["lambda_scaled"] = np.asarray(lam["lambda_scaled"]["values"])
            if "blowup" in which and len(radii) >= 2:
                entry["blowup_cauchy"] = blow_up_cauchy(sol, Z, sorted(radii, reverse=True))
        except (AnalysisError, ValueError) as exc:
            log.warning("radial check at center %s skipped: %s", np.round(Z, 6).tolist(), exc)
            entry["error"] = str(exc)
        entry.update(cols)
        out["profiles"].append(entry)
        if cols:
            names = list(cols)
            write_series(outdir / "series" / f"profile_{i:02d}.csv", ["r"] + names,
                         zip(radii, *(cols[k] for k in names)))
    return out


def _fbc(sol, kernel, fb, outdir) -> dict[str, Any]:
    rep = fbc_check(sol, kernel, fb).metrics
    pts = np.asarray(rep["points"])
    nrm = np.asarray(rep["normals"])
    head = ["x", "y", "nx", "ny"] if sol.grid.dim == 2 else ["x", "nx"]
    write_series(outdir / "series" / "fbc.csv", head + ["measured", "oracle", "formula"],
                 np.column_stack([pts, nrm, rep["measured_slope"], rep["slope_oracle"],
                                  rep["alpha_formula"]]))
    return {k: v for k, v in rep.items() if k not in ("points", "normals")}


def stage_flatness(cfg: dict[str, Any], sol: Solution, outdir: Path, center=None,
                   rtilde=None, levels=None, r0=None) -> dict[str, Any]:
    kernel = C.build_kernel(cfg)
    fb = extract_free_boundary(sol)
    if fb.empty:
        raise FlatnessError("no free boundary to run the cascade on")
    if center is None:
        if cfg["flatness.center"] == "auto":
            mid = sol.grid.lower + 0.5 * np.asarray(sol.grid.extent)
            center = fb.points[int(np.argmin(np.linalg.norm(fb.points - mid, axis=1)))]
        else:
            center = np.asarray(cfg["flatness.center"], dtype=float).reshape(-1)
    rtilde = cfg["flatness.rtilde"] if rtilde is None else rtilde
    levels = cfg["flatness.levels"] if levels is None else levels
    r0 = cfg["flatness.r0"] if r0 is None else r0
    cr = improvement_cascade(sol, center, r0, rtilde, levels, kernel=kernel, fb=fb)
    res = jsonable(cr)
    write_json(outdir / "flatness.json", res)
    write_series(outdir / "series" / "cascade.csv", ["k", "r", "epsilon"],
                 [(k, r, e) for k, (r, e) in enumerate(zip(cr.radii, cr.epsilons))])
    if cfg["plots.enabled"]:
        from . import plotting
        plotting.plot_cascade(cr.radii, cr.epsilons, outdir / "figures" / "cascade.png")
    return res


def write_summary(outdir: Path, cfg: dict[str, Any], sol: Solution | None,
                  analysis: dict | None, flat: dict | None) -> Path:
    lines = [f"experiment: {cfg['experiment.name']}", f"seed: {cfg['experiment.seed']}"]
    if sol is not None:
        lines += [f"grid: {sol.grid.shape} h = {sol.grid.h:.6g}",
                  f"converged: {sol.converged} after {sol.sweeps_used} sweeps",
                  f"final energy: {sol.final_energy:.12g}"]
    if analysis:
        fbd = analysis.get("free_boundary", {})
        lines.append(f"free boundary points: {fbd.get('points')} length {fbd.get('length', 0):.6g}")
        for key in ("norms", "fbc"):
            part = analysis.get(key)
            if isinstance(part, dict):
                scal = {k: v for k, v in part.items() if isinstance(v, (int, float))}
                lines.append(f"{key}: " + ", ".join(f"{k} = {v:.6g}" for k, v in sorted(scal.items())))
        if isinstance(analysis.get("growth"), dict) and "constant" in analysis["growth"]:
            lines.append(f"linear growth constant: {analysis['growth']['constant']:.6g}")
    if flat:
        eps = [lv["epsilon"] for lv in flat["levels"]]
        lines.append("flatness epsilons: " + ", ".join(f"{e:.4g}" if isinstance(e, float) else str(e) for e in eps))
        lines.append(f"gamma fit: {flat['gamma_fit']}")
    path = outdir / "summary.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# commands


def _prepare(args) -> tuple[dict[str, Any], Path]:
    cfg = C.load(args.config)
    if getattr(args, "levels", None) is not None and args.command in ("run", "solve"):
        cfg["solve.continuation_levels"] = args.levels
    out = output_dir(cfg, args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(C.dumps(cfg), encoding="utf-8")
    return cfg, out


def cmd_run(args) -> int:
    cfg, out = _prepare(args)
    for stale in ("analysis.json", "flatness.json", "series", "figures"):
        p = out / stale
        if p.is_dir():
            shutil.rmtree(p)
        elif p.exists():
            p.unlink()
    sol = stage_solve(cfg, out)
    analysis = flat = None
    if cfg["analysis.enabled"]:
        analysis = stage_analyze(cfg, sol, out, _parse_point(args.center) and [_parse_point(args.center)],
                                 _parse_list(args.radii, "--radii"))
    if cfg["flatness.enabled"]:
        try:
            flat = stage_flatness(cfg, sol, out, _parse_point(args.center), args.rtilde)
        except (FlatnessError, AnalysisError) as exc:
            log.warning("flatness cascade skipped: %s", exc)
            write_json(out / "flatness.json", {"error": str(exc)})
    write_summary(out, cfg, sol, analysis, flat)
    write_manifest(out)
    print(f"artifacts in {out}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_solve(args) -> int:
    cfg, out = _prepare(args)
    sol = stage_solve(cfg, out)
    write_summary(out, cfg, sol, None, None)
    write_manifest(out)
    print(f"converged: {sol.converged} sweeps: {sol.sweeps_used} energy: {sol.final_energy:.12g}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_analyze(args) -> int:
    cfg, out = _prepare(args)
    sol = _load_solution(out, args.solution)
    center = _parse_point(args.center)
    res = stage_analyze(cfg, sol, out, [center] if center else None, _parse_list(args.radii, "--radii"))
    write_summary(out, cfg, sol, res, None)
    write_manifest(out)
    print(f"analysis written to {out / 'analysis.json'}")
    return EXIT_OK


def cmd_flatness(args) -> int:
    cfg, out = _prepare(args)
    sol = _load_solution(out, args.solution)
    res = stage_flatness(cfg, sol, out, _parse_point(args.center), args.rtilde, args.levels, args.r0)
    write_manifest(out)
    eps = ", ".join(f"{lv['epsilon']:.4g}" for lv in res["levels"])
    print(f"epsilons: {eps}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    o = oracle_1d(args.p, args.q, args.b, args.L, args.f, args.m)
    if args.json:
        sys.stdout.write(dumps(o.to_dict()))
    else:
        print(f"branch {o.branch}")
        print(f"slope {o.slope:.12g}")
        print(f"x0 {o.fb_position:.12g}")
        print(f"energy {o.energy:.12g}")
    if args.brute_force:
        d = brute_force_1d(args.p, args.q, args.b, args.L, args.f, args.m, nodes=args.nodes)
        print(f"brute force x0 {d.fb_position:.12g} energy {d.energy:.12g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = C.load(args.config)
    kernel = C.build_kernel(cfg)
    rep = verify_structural_conditions(kernel, SampleSpec(points=args.samples, seed=cfg["experiment.seed"]))
    for name in sorted(rep.checks):
        print(f"{'PASS' if rep.checks[name] else 'FAIL'} {name}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_schema(args) -> int:
    sys.stdout.write(C.schema_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onephase", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def staged(name, help_, fn):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--out", help=f"artifact directory (default ${OUTPUT_ROOT_ENV}/output.dir)")
        p.set_defaults(fn=fn)
        return p

    p = staged("run", "full pipeline on one config", cmd_run)
    p.add_argument("--center")
    p.add_argument("--radii")
    p.add_argument("--rtilde", type=float)
    p.add_argument("--levels", type=int, help="continuation levels")
    p = staged("solve", "solve and write the solution directory", cmd_solve)
    p.add_argument("--levels", type=int, help="continuation levels")
    p = staged("analyze", "analyze a written solution", cmd_analyze)
    p.add_argument("--solution", help="solution directory (default <out>/solution)")
    p.add_argument("--center", help="x,y")
    p.add_argument("--radii", help="r1,r2,...")
    p = staged("flatness", "run the flatness cascade on a written solution", cmd_flatness)
    p.add_argument("--solution")
    p.add_argument("--center", help="x,y")
    p.add_argument("--rtilde", type=float)
    p.add_argument("--levels", type=int, help="deepest cascade level")
    p.add_argument("--r0", type=float)

    p = sub.add_parser("oracle", help="closed-form 1-D minimizer")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--f", type=float, default=0.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--brute-force", action="store_true")
    p.add_argument("--nodes", type=int, default=1025)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("verify-kernel", help="sample the structural conditions of the configured kernel")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("schema", help="print the configuration schema")
    p.set_defaults(fn=cmd_schema)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except C.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except StagingError as exc:
        print(f"staging error: {exc}", file=sys.stderr)
        return EXIT_STAGING
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
