import math

import numpy as np
import pytest

from onephase import bundled_config
from onephase.config import build_options, build_problem, load
from onephase.grid import BoundaryData, build_grid
from onephase.kernel import prototype_kernel
from onephase.minimizer import Problem, Solution, SolveOptions, solve
from onephase.oracle import planar_profile, strip_boundary

# criterion lines recorded by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def strip_solve(nodes: int, mollify: bool = True, levels: int = 1, Q: float = 1.0) -> Solution:
    k = prototype_kernel(2, 1, Q=Q)
    g = build_grid(2, (0, 0), (1, 1), (nodes, nodes))
    s = math.sqrt(Q)
    bd = BoundaryData.from_function(g, strip_boundary(s, 1 - 0.5 / s))
    return solve(Problem(k, g, bd), SolveOptions(mollify=mollify, continuation_levels=levels))


@pytest.fixture(scope="session")
def strip201():
    return strip_solve(201)


@pytest.fixture(scope="session")
def strip101():
    return strip_solve(101)


@pytest.fixture(scope="session")
def jet_case():
    cfg = load(bundled_config("jetflow"))
    prob = build_problem(cfg)
    return prob.kernel, solve(prob, build_options(cfg))


@pytest.fixture
def planar():
    """(alpha, fixture solution) for u = (y - 0.5)+ on the unit square, 201 nodes."""
    def make(alpha=1.0, nodes=201, nu=(0.0, 1.0), offset=0.5):
        g = build_grid(2, (0, 0), (1, 1), (nodes, nodes))
        return Solution.fixture(planar_profile(alpha, np.asarray(nu), offset, g))
    return make
