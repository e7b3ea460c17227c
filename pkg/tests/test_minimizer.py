import math

import numpy as np
import pytest

from onephase.grid import BoundaryData, GridFunction, build_grid, coons_extension
from onephase.kernel import prototype_kernel
from onephase.minimizer import (CellFields, Problem, Relaxer, Solution, SolveOptions, SolverError,
                                read_solution, relax_node, solve, sweep, total_energy,
                                trapping_check, write_solution)
from onephase.oracle import brute_force_1d, discrete_energy_1d, oracle_1d, strip_boundary


def strip_problem(nodes, alpha=1.0, y0=0.5, **kw):
    k = prototype_kernel(2, 1, **kw)
    g = build_grid(2, (0, 0), (1, 1), (nodes, nodes))
    return Problem(k, g, BoundaryData.from_function(g, strip_boundary(alpha, y0)))


def test_total_energy_examples():
    k = prototype_kernel(2, 1)
    g = build_grid(2, (0, 0), (1, 1), (21, 21))
    assert total_energy(GridFunction(g, np.zeros(g.shape)), k) == 0
    assert total_energy(GridFunction(g, np.full(g.shape, 0.3)), k) == pytest.approx(1.0)
    # kink on a grid line: the quadrature is exact
    g = build_grid(2, (-1, -1), (2, 2), (21, 21))
    u = GridFunction.from_function(g, lambda X: np.maximum(X[..., 0], 0.0))
    assert total_energy(u, k) == pytest.approx(4.0, abs=1e-12)
    # kink off the grid: first-order convergence to 4 (1 - s)
    s = 0.013
    errs = []
    for n in (21, 41, 81, 161):
        g = build_grid(2, (-1, -1), (2, 2), (n, n))
        u = GridFunction.from_function(g, lambda X: np.maximum(X[..., 0] - s, 0.0))
        errs.append(abs(total_energy(u, k) - 4.0 * (1 - s)))
    assert errs[-1] < 0.05
    assert errs[-1] <= 2 * g.h * 4


def test_relax_node_examples():
    k1 = prototype_kernel(2, 1, dim=1)
    g = build_grid(1, (0,), (1,), (3,))
    assert relax_node(GridFunction(g, np.zeros(3)), (1,), k1) == 0
    a, b = 5.0, 7.0
    assert relax_node(GridFunction(g, np.array([a, 0.0, b])), (1,), k1) == pytest.approx((a + b) / 2)
    # h = 0.5, neighbours 0 and 1: E(0) = 1/h + Qh equals E(1/2) = 1/(2h) + 2Qh when Q = 2
    tie = prototype_kernel(2, 1, Q=2.0, dim=1, eps_Q=0.1)
    assert relax_node(GridFunction(g, np.array([0.0, 0.3, 1.0])), (1,), tie) == 0
    with pytest.raises(SolverError):
        relax_node(GridFunction(g, np.zeros(3)), (0,), k1)


def test_sweep_examples():
    prob = strip_problem(21)
    sol = solve(prob, SolveOptions(mollify=True))
    _, change = sweep(sol.u, prob.kernel, options=SolveOptions(omega=1.0))
    assert change <= sol.metadata["options"]["tol"]
    g = prob.grid
    zero = GridFunction(g, np.zeros(g.shape))
    out, change = sweep(zero, prob.kernel)
    assert change == 0 and not out.values.any()
    rng = np.random.default_rng(0)
    pert = sol.u.values.copy()
    inner = ~g.boundary_mask & (pert > 0)
    pert[inner] += 0.01 * rng.random(inner.sum())
    u0 = GridFunction(g, pert)
    u1, _ = sweep(u0, prob.kernel)
    assert total_energy(u1, prob.kernel) < total_energy(u0, prob.kernel)


def test_zero_data_one_sweep():
    prob = strip_problem(11, alpha=0.0)
    sol = solve(prob)
    assert sol.converged and sol.sweeps_used == 1 and not sol.u.values.any()


def test_strip_matches_planar_profile():
    prob = strip_problem(51)
    for opts in (SolveOptions(), SolveOptions(mollify=True), SolveOptions(mollify=True, continuation_levels=2)):
        sol = solve(prob, opts)
        assert sol.converged
        assert np.all(np.diff(sol.energy_trace) <= 1e-12)
        exact = np.maximum(prob.grid.coords()[..., 1] - 0.5, 0.0)
        assert np.max(np.abs(sol.u.values - exact)) <= 2 * prob.grid.h


def test_clamped_strip_has_no_interior_free_boundary():
    o = oracle_1d(2, 1, 2.0)
    assert o.branch == "clamped"
    prob = strip_problem(31, alpha=o.slope, y0=0.0)
    sol = solve(prob, SolveOptions(mollify=True))
    assert np.all(sol.u.values[:, 1:] > 0)
    assert not sol.u.values[:, 0].any()


@pytest.mark.parametrize("p,Q", [(2.0, 1.0), (3.0, 1.0), (2.0, 4.0)])
def test_one_dimensional_solver_matches_brute_force(p, Q):
    nodes = 129
    o = oracle_1d(p, Q, 0.5)
    k = prototype_kernel(p, 1, Q=Q, dim=1, eps_Q=0.1)
    g = build_grid(1, (0,), (1,), (nodes,))
    bd = BoundaryData.from_values(g, np.array([0.0] + [0.0] * (nodes - 2) + [0.5]))
    sol = solve(Problem(k, g, bd), SolveOptions(mollify=True))
    bf = brute_force_1d(p, Q, 0.5, nodes=nodes)
    pos = np.flatnonzero(sol.u.values > 0)
    x0 = (pos[0] - 1) * g.h
    assert abs(x0 - o.fb_position) <= 2 * g.h
    E = discrete_energy_1d(sol.u.values, g.h, p, Q)
    assert E == pytest.approx(bf.energy, rel=1e-3)
    assert E >= bf.energy - 1e-12


def test_compiled_and_array_paths_agree_bitwise():
    prob = strip_problem(17, f=0.3, K=1.0)
    fields = CellFields(prob.kernel, prob.grid)
    start = np.maximum(prob.grid.coords()[..., 1] - 0.4, 0.0) * 0.9
    start[prob.grid.boundary_mask] = prob.boundary.full()[prob.grid.boundary_mask]
    for order in ("two-color", "lexicographic", "randomized"):
        for delta in (0.0, 0.05):
            fast = Relaxer(fields, SolveOptions(sweep_order=order, seed=4))
            slow = Relaxer(fields, SolveOptions(sweep_order=order, seed=4))
            assert fast.compiled
            slow.compiled = False
            a, b = start.copy(), start.copy()
            for _ in range(3):
                fast.sweep(a, delta)
                slow.sweep(b, delta)
            assert np.array_equal(a, b), (order, delta)


def test_restart_is_a_fixed_point():
    prob = strip_problem(31)
    sol = solve(prob, SolveOptions(mollify=True))
    again = solve(prob, SolveOptions(mollify=True), initial=sol.u)
    assert again.converged and again.sweeps_used <= 2
    assert np.max(np.abs(again.u.values - sol.u.values)) <= 1e-8


def test_orders_are_deterministic_and_agree():
    prob = strip_problem(21, alpha=1.0, y0=0.45)
    energies = {}
    for order in ("two-color", "lexicographic", "randomized"):
        a = solve(prob, SolveOptions(sweep_order=order, mollify=True, seed=7))
        b = solve(prob, SolveOptions(sweep_order=order, mollify=True, seed=7))
        assert np.array_equal(a.u.values, b.u.values)
        energies[order] = a.final_energy
    vals = np.array(list(energies.values()))
    assert np.ptp(vals) <= 1e-2 * vals.max()


def test_nonquadratic_kernel_monotone():
    k = prototype_kernel(2.5, 1.5, lam=0.2)
    g = build_grid(2, (0, 0), (1, 1), (15, 15))
    bd = BoundaryData.from_function(g, strip_boundary(1.0, 0.5))
    sol = solve(Problem(k, g, bd), SolveOptions(mollify=True))
    assert sol.converged
    assert all(s["monotone"] for s in sol.metadata["stages"])


def test_nonconvergence_is_reported():
    prob = strip_problem(31, y0=0.3)
    sol = solve(prob, SolveOptions(max_sweeps=2, mollify=True))
    assert not sol.converged


def test_solution_round_trip(tmp_path):
    sol = solve(strip_problem(11), SolveOptions(mollify=True))
    write_solution(sol, tmp_path / "s")
    back = read_solution(tmp_path / "s")
    assert np.array_equal(back.u.values, sol.u.values)
    assert back.energy_trace == sol.energy_trace and back.converged == sol.converged
    with pytest.raises(FileNotFoundError):
        read_solution(tmp_path / "missing")


def test_options_validation():
    with pytest.raises(SolverError):
        SolveOptions(sweep_order="spiral")
    with pytest.raises(SolverError):
        SolveOptions(omega=2.5)
    with pytest.raises(SolverError):
        SolveOptions(tol=-1)
    opts = SolveOptions().resolved(build_grid(2, (0, 0), (1, 1), (11, 11)), 2.0)
    assert opts.tol == pytest.approx(2e-8) and opts.max_sweeps == 550
    assert SolveOptions().omega_for(build_grid(2, (0, 0), (1, 1), (11, 11))) == pytest.approx(
        2 / (1 + math.sin(math.pi * 0.1)))


def test_randomized_resolves_on_the_strip():
    prob = strip_problem(21)
    # from the exact planar start every order stays at the planar energy
    plain = solve(prob)
    diag = trapping_check(prob, plain)
    assert [r["seed"] for r in diag["runs"]] == [1, 2, 3]
    assert all(r["converged"] and r["phase_mismatch"] == 0 for r in diag["runs"])
    assert not diag["trapped"]
    # the smoothed-jump ladder stops at a nearby critical point above it,
    # which the randomized orders expose
    opts = SolveOptions(mollify=True)
    moll = solve(prob, opts)
    assert moll.final_energy > plain.final_energy
    assert trapping_check(prob, moll, opts)["trapped"]


def test_trapping_check_flags_a_poor_reference():
    prob = strip_problem(21)
    g = prob.grid
    # the Coons extension raised by 0.3 inside is admissible but far from critical
    u = GridFunction(g, coons_extension(prob.boundary) + 0.3 * (~g.boundary_mask))
    poor = Solution(u, [total_energy(u, prob.kernel)], 0, True, {})
    diag = trapping_check(prob, poor, SolveOptions(mollify=True), seeds=(7,))
    assert diag["trapped"] and diag["runs"][0]["max_difference"] > 0.1
