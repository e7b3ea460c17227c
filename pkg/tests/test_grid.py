import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onephase.grid import (BoundaryData, GridError, GridFunction, ball_mask, build_grid, cell_gradient,
                           cell_gradients, coons_extension, discrete_volume, integrate, interpolate,
                           read_csv, write_csv)


def test_build_grid_spacing():
    assert build_grid(2, (0, 0), (1, 1), (101, 101)).h == pytest.approx(0.01)
    g = build_grid(1, (0,), (1,), (11,))
    assert g.cell_shape == (10,) and g.h == pytest.approx(0.1)
    with pytest.raises(GridError):
        build_grid(2, (0, 0), (1, 1), (2, 2))
    with pytest.raises(GridError):
        build_grid(2, (0, 0), (1, 2), (11, 11))


def test_cell_gradient_affine_and_constant():
    g = build_grid(2, (0, 0), (1, 1), (11, 11))
    u = GridFunction.from_function(g, lambda X: 3 * X[..., 0] - X[..., 1])
    assert np.allclose(cell_gradients(u.values, g.h), (3, -1))
    assert np.allclose(cell_gradient(u, (4, 7)), (3, -1))
    c = GridFunction(g, np.full(g.shape, 2.0))
    assert np.allclose(cell_gradients(c.values, g.h), 0)


def test_cell_gradient_midpoint_exact_for_square():
    g = build_grid(2, (0, 0), (1, 1), (11, 11))
    u = GridFunction.from_function(g, lambda X: X[..., 0] ** 2)
    grads = cell_gradients(u.values, g.h)
    xc = g.cell_centers()[..., 0]
    assert np.allclose(grads[..., 0], 2 * xc)


def test_interpolate():
    g = build_grid(2, (0, 0), (1, 1), (11, 11))
    aff = GridFunction.from_function(g, lambda X: 1 + 2 * X[..., 0] - 0.5 * X[..., 1])
    assert interpolate(aff, (0.3, 0.4)) == pytest.approx(aff.values[3, 4])
    assert interpolate(aff, (0.37, 0.61)) == pytest.approx(1 + 0.74 - 0.305)
    sq = GridFunction.from_function(g, lambda X: X[..., 0] ** 2)
    x = 0.35
    assert interpolate(sq, (x, 0.5)) - x ** 2 == pytest.approx(0.0025)
    with pytest.raises(GridError):
        interpolate(aff, (1.2, 0.5))


def test_ball_mask_volume():
    g = build_grid(2, (0, 0), (1.2, 1.2), (241, 241))
    m = ball_mask(g, (0.6, 0.6), 0.5)
    assert discrete_volume(g, m) == pytest.approx(math.pi * 0.25, rel=0.02)
    assert ball_mask(g, (0.6, 0.6), 5.0).all()
    with pytest.raises(GridError):
        ball_mask(g, (0.6, 0.6), g.h)


def test_integrate_examples():
    g = build_grid(2, (0, 0), (1, 1), (51, 51))
    one = GridFunction(g, np.ones(g.shape))
    assert integrate(one) == pytest.approx(1, abs=g.h)
    assert integrate(GridFunction(g, np.zeros(g.shape))) == 0
    x = GridFunction.from_function(g, lambda X: X[..., 0])
    assert integrate(x) == pytest.approx(0.5, abs=g.h ** 2)


def test_boundary_data_and_coons():
    g = build_grid(2, (0, 0), (1, 1), (21, 21))
    bd = BoundaryData.from_function(g, lambda X: 2 * X[..., 0] + X[..., 1])
    u = coons_extension(bd)
    assert np.allclose(u, 2 * g.coords()[..., 0] + g.coords()[..., 1])
    with pytest.raises(GridError):
        BoundaryData.from_function(g, lambda X: X[..., 0] - 0.5)


def test_grid_function_rejects_nan():
    g = build_grid(1, (0,), (1,), (5,))
    with pytest.raises(GridError):
        GridFunction(g, np.array([0, 1, np.nan, 0, 0]))


def test_csv_round_trip(tmp_path):
    g = build_grid(2, (0, 0), (1, 2), (5, 9))
    u = GridFunction.from_function(g, lambda X: np.sin(X[..., 0]) * X[..., 1] / 3)
    path = write_csv(u, tmp_path / "u.csv")
    v = read_csv(path, g)
    assert np.array_equal(u.values, v.values)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5),
       x=st.floats(0, 1), y=st.floats(0, 1))
def test_affine_reproduction_property(a, b, c, x, y):
    g = build_grid(2, (0, 0), (1, 1), (7, 7))
    u = GridFunction.from_function(g, lambda X: a + b * X[..., 0] + c * X[..., 1])
    assert interpolate(u, (x, y)) == pytest.approx(a + b * x + c * y, abs=1e-12)
    assert np.allclose(cell_gradients(u.values, g.h), (b, c))
