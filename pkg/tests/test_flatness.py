import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onephase.analysis import extract_free_boundary, fbc_check
from onephase.flatness import (FlatnessError, best_direction, flatness_epsilon,
                               harnack_at, harnack_dichotomy_check, improvement_cascade,
                               viscosity_touch_test)
from onephase.grid import BoundaryData, GridFunction, build_grid
from onephase.kernel import SinusoidalScalar, prototype_kernel
from onephase.minimizer import Problem, Solution, SolveOptions, solve
from onephase.oracle import strip_boundary
from onephase.report import dumps

C = np.array([0.5, 0.5])


def rot(th):
    return np.array([math.cos(th), math.sin(th)])


def profile(fn, nodes=201):
    g = build_grid(2, (0, 0), (1, 1), (nodes, nodes))
    return Solution.fixture(GridFunction(g, fn(g.coords() - C)))


def cone(alpha=1.0, nu=(0.0, 1.0), shift=0.0, nodes=201):
    nu = np.asarray(nu, dtype=float)
    return profile(lambda D: alpha * np.maximum(D @ nu + shift, 0.0), nodes)


@pytest.fixture(scope="module")
def flat_jet():
    """Jetflow solve with an almost flat interface: Q = 1 + 0.02 sin(2 pi x)."""
    Q = SinusoidalScalar(1.0, 0.02, (1.0, 0.0))
    k = prototype_kernel(2, 1, Q=Q, form="jetflow", lam=0.5)
    g = build_grid(2, (0, 0), (1, 1), (101, 101))
    bd = BoundaryData.from_function(g, strip_boundary(math.sqrt(2), 0.5))
    sol = solve(Problem(k, g, bd), SolveOptions(mollify=True, continuation_levels=1))
    assert sol.converged
    return k, sol


# ---------------------------------------------------------------------------
# flatness_epsilon and best_direction


def test_aligned_planar_profile_is_flat():
    sol = cone(1.3)
    r = 0.3
    assert flatness_epsilon(sol, C, r, (0, 1)) <= 2 * sol.grid.h / r


def test_translated_profile():
    r = 0.3
    sol = cone(1.0, shift=0.1 * r)
    assert flatness_epsilon(sol, C, r, (0, 1)) == pytest.approx(0.1, abs=1e-9)


def test_tilted_measurement_direction():
    th = 0.05
    eps = flatness_epsilon(cone(), C, 0.3, rot(math.pi / 2 + th))
    assert 0.03 <= eps <= 0.07


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.2))
def test_epsilon_grows_with_translation(delta):
    r = 0.25
    h = 1.0 / 100
    base = flatness_epsilon(cone(nodes=101), C, r, (0, 1))
    moved = flatness_epsilon(cone(shift=delta * r, nodes=101), C, r, (0, 1))
    assert abs(moved - (base + delta)) <= 2 * h / r


def test_epsilon_preconditions():
    sol = cone(nodes=41)
    with pytest.raises(FlatnessError, match="leaves"):
        flatness_epsilon(sol, C, 0.6, (0, 1))
    with pytest.raises(FlatnessError, match="no positive"):
        flatness_epsilon(cone(shift=-0.4, nodes=41), C, 0.2, (0, 1))
    with pytest.raises(FlatnessError, match="nonzero"):
        flatness_epsilon(sol, C, 0.2, (0, 0))


def test_best_direction_on_planar_profile():
    true = rot(math.pi / 2 + 0.03)
    sol = cone(nu=true)
    nu, eps, _ = best_direction(sol, C, 0.3)
    assert math.acos(min(1.0, nu @ true)) <= 1e-3
    assert eps <= 2 * sol.grid.h / 0.3


@pytest.mark.parametrize("r", [0.25, 0.4])
def test_best_direction_recovers_tilt_from_far_seed(r):
    true = rot(math.pi / 2)
    sol = cone(nu=true)
    seed = rot(math.pi / 2 + 0.2)
    nu, eps, _ = best_direction(sol, C, r, seed=seed)
    assert r >= 50 * sol.grid.h
    assert math.acos(min(1.0, nu @ true)) <= 1e-2
    # the search never returns something worse than the seed
    assert eps <= flatness_epsilon(sol, C, r, seed)


def test_epsilon_is_unimodal_in_angle_for_planar_data():
    sol = cone(nodes=101)
    th = np.linspace(-0.3, 0.3, 61)
    eps = np.array([flatness_epsilon(sol, C, 0.3, rot(math.pi / 2 + t), alpha=1.0) for t in th])
    k = int(np.argmin(eps))
    assert abs(th[k]) <= 0.01
    assert np.all(np.diff(eps[:k + 1]) <= 1e-12) and np.all(np.diff(eps[k:]) >= -1e-12)


def test_circle_arc_flatness_scales_with_r_over_R():
    R = 1.0
    center = C - np.array([0.0, R])
    g = build_grid(2, (0, 0), (1, 1), (401, 401))
    sol = Solution.fixture(GridFunction(
        g, np.maximum(np.linalg.norm(g.coords() - center, axis=-1) - R, 0.0)))
    ratios = []
    for r in (0.1, 0.2, 0.4):
        _, eps, _ = best_direction(sol, C, r)
        ratios.append(eps / (r / R))
    assert min(ratios) > 0.1 and max(ratios) < 2.0
    assert max(ratios) / min(ratios) < 2.0


# ---------------------------------------------------------------------------
# Harnack dichotomy


def test_harnack_on_exact_cone():
    rep = harnack_dichotomy_check(cone(), C, 0.3, 0.0, nu=(0, 1), alpha=1.0).metrics
    assert rep["applicable"] and rep["branch"] == "both" and rep["defect"] <= 1e-12


def test_harnack_translate_takes_lower_branch_with_c_one():
    r = 0.3
    sol = cone(shift=0.04 * r)
    rep = harnack_dichotomy_check(sol, C, r, 0.04, nu=(0, 1), alpha=1.0)
    assert rep.metrics["branch"] == "lower"
    assert rep.metrics["c"] == pytest.approx(1.0, abs=1e-9)
    assert rep.checks["branch_holds"]


def test_harnack_reports_inapplicable_hypothesis():
    sol = cone(shift=0.2 * 0.3)
    rep = harnack_dichotomy_check(sol, C, 0.3, 0.01, nu=(0, 1), alpha=1.0)
    assert rep.metrics["applicable"] is False and rep.metrics["branch"] == "inapplicable"
    with pytest.raises(FlatnessError, match="1/20"):
        harnack_dichotomy_check(sol, C, 0.3, 0.01, nu=(0, 1), alpha=1.0, shift=0.06)


def test_harnack_constant_on_flat_jetflow_solve(flat_jet):
    _, sol = flat_jet
    fb = extract_free_boundary(sol)
    h = sol.grid.h
    sel = np.flatnonzero(np.abs(fb.points[:, 0] - 0.5) < 0.25)
    idx = sel[np.linspace(0, len(sel) - 1, 20).round().astype(int)]
    cs = []
    for i in idx:
        rep = harnack_at(sol, fb.points[i], 12 * h, fb)
        assert rep.metrics["applicable"]
        cs.append(rep.metrics["c"])
    assert len(cs) == 20 and min(cs) >= 0.01


# ---------------------------------------------------------------------------
# viscosity touching


def test_touch_on_planar_solution_is_equality_case():
    alpha = 1.0
    sol = cone(alpha)
    k = prototype_kernel(2, 1)
    kappa = fbc_check(sol, k).metrics["kappa_fit"]
    rep = viscosity_touch_test(sol, k, C, {"gradient": [0.0, alpha]}, kappa=kappa)
    m = rep.metrics
    assert m["touch_below"] and m["touch_above"] and m["equality_case"]
    assert m["sign"] == 0 and rep.passed


def test_steeper_test_function_does_not_touch_from_below():
    sol = cone(1.0)
    rep = viscosity_touch_test(sol, prototype_kernel(2, 1), C, {"gradient": [0.0, 2.0]}, kappa=2.0)
    assert not rep.metrics["touch_below"]
    assert "below_inequality" not in rep.checks


def test_shallower_test_function_touches_below_and_respects_inequality():
    sol = cone(1.0)
    rep = viscosity_touch_test(sol, prototype_kernel(2, 1), C, {"gradient": [0.0, 0.5]}, kappa=2.0)
    assert rep.metrics["touch_below"] and not rep.metrics["touch_above"]
    assert rep.checks["below_inequality"] and rep.metrics["sign"] < 0


def test_touch_slack_admits_curved_test_functions():
    sol = cone(1.0)
    phi = {"gradient": [0.0, 1.0], "hessian": [[-0.5, 0.0], [0.0, 0.0]]}
    rep = viscosity_touch_test(sol, prototype_kernel(2, 1), C, phi, kappa=2.0)
    assert rep.metrics["touch_below"]
    with pytest.raises(FlatnessError, match="nonzero"):
        viscosity_touch_test(sol, prototype_kernel(2, 1), C, {"gradient": [0.0, 0.0]})


# ---------------------------------------------------------------------------
# cascade


def test_cascade_on_planar_profile():
    sol = cone()
    cr = improvement_cascade(sol, C, 0.4, 0.5, 3)
    assert len(cr.records) == 4
    assert np.all(cr.epsilons <= 3 * sol.grid.h / cr.radii)
    assert np.all(np.diff(cr.radii) < 0)
    assert max(cr.drift_angle) <= 1e-2


def test_cascade_on_exact_cone_reports_infinite_gamma():
    # the interface on grid nodes makes every level exactly flat
    cr = improvement_cascade(cone(), C, 0.4, 0.5, 2)
    assert np.all(cr.epsilons <= 1e-12) and cr.gamma_fit == math.inf
    assert json.loads(dumps(cr.to_dict()))["gamma_fit"] == "inf"


def test_tilted_plus_quadratic_fixture_gives_gamma_one():
    nu = rot(math.pi / 2 + 0.1)
    tau = np.array([nu[1], -nu[0]])
    sol = profile(lambda D: np.maximum(D @ nu + (D @ tau) ** 2, 0.0), nodes=401)
    cr = improvement_cascade(sol, C, 0.4, 0.5, 3, seed=nu)
    assert cr.epsilons[0] == pytest.approx(0.4, rel=0.1)
    assert cr.gamma_fit == pytest.approx(1.0, abs=0.1)


def test_cascade_truncates_unresolvable_levels():
    sol = cone(nodes=101)
    # 8h = 0.08 admits r = 0.2 and 0.1 only
    cr = improvement_cascade(sol, C, 0.2, 0.5, 5)
    assert len(cr.records) == 2 and cr.warnings
    with pytest.raises(FlatnessError, match="8h"):
        improvement_cascade(sol, C, 0.05, 0.5, 1)
    with pytest.raises(FlatnessError, match="rtilde"):
        improvement_cascade(sol, C, 0.2, 1.0, 1)


def test_cascade_on_flat_jetflow_solve(flat_jet):
    k, sol = flat_jet
    fb = extract_free_boundary(sol)
    Z = fb.points[int(np.argmin(np.linalg.norm(fb.points - C, axis=1)))]
    cr = improvement_cascade(sol, Z, 0.32, 0.5, 2, kernel=k, fb=fb)
    hyp = cr.hypothesis_report
    assert hyp["Q_holder_seminorm"] <= 0.2
    assert hyp["rtilde_beta"] == 0.5 and hyp["rtilde_beta_le_quarter"] is False
    assert np.all(cr.epsilons <= 0.05)
    assert max(cr.drift_angle) <= 0.2
