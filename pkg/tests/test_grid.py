import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seglab.exceptions import BallOutOfDomain
from seglab.grid import (
    Grid2D,
    ScalarField,
    ball_integral,
    ball_weights,
    circle_integral,
    gradient,
    interior_mask,
    laplacian,
    radial_derivative,
    rect_disk_area,
    weighted_sum,
)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        Grid2D(8, 32, 0.1)
    with pytest.raises(ValueError):
        Grid2D(32, 32, -1.0)


def test_square_covers_interval():
    g = Grid2D.square(0.0, 1.0, 65)
    assert g.x[0] == 0.0 and g.x[-1] == pytest.approx(1.0)
    assert g.bounds == pytest.approx((0.0, 1.0, 0.0, 1.0))


def test_header_round_trip():
    g = Grid2D(40, 50, 0.02, (-0.3, 0.1))
    assert Grid2D.from_header(g.to_header()) == g


def test_check_ball_margin():
    g = Grid2D.square(-1.0, 1.0, 101)
    g.check_ball((0.0, 0.0), 0.9)
    with pytest.raises(BallOutOfDomain):
        g.check_ball((0.0, 0.0), 0.99)
    with pytest.raises(BallOutOfDomain):
        g.check_ball((0.0, 0.0), 0.0)


@settings(max_examples=40, deadline=None)
@given(
    cx=st.floats(-0.3, 0.3),
    cy=st.floats(-0.3, 0.3),
    r=st.floats(0.05, 0.5),
)
def test_ball_weights_sum_to_disk_area(cx, cy, r):
    g = Grid2D.square(-1.0, 1.0, 81)
    _, _, w = ball_weights(g, (cx, cy), r)
    assert w.sum() == pytest.approx(math.pi * r * r, rel=1e-12)


def test_rect_disk_area_full_and_empty():
    assert rect_disk_area(-2, 2, -2, 2, 1.0) == pytest.approx(math.pi)
    assert rect_disk_area(1.5, 2, 1.5, 2, 1.0) == pytest.approx(0.0)


def test_ball_integral_of_quadratic():
    g = Grid2D.square(-1.0, 1.0, 201)
    f = ScalarField.from_function(g, lambda X, Y: X * X + Y * Y)
    # int_B r^2 = pi r^4 / 2
    assert ball_integral(f, (0.0, 0.0), 0.5) == pytest.approx(math.pi * 0.5**4 / 2, rel=2e-4)


def test_circle_integral_exact_for_smooth_field():
    g = Grid2D.square(-1.0, 1.0, 129)
    f = ScalarField.from_function(g, lambda X, Y: 1.0 + X * X * Y)
    r = 0.4
    assert circle_integral(f, (0.0, 0.0), r) == pytest.approx(2 * math.pi * r, rel=1e-10)


def test_radial_derivative_of_r2():
    g = Grid2D.square(-1.0, 1.0, 129)
    f = ScalarField.from_function(g, lambda X, Y: X * X + Y * Y)
    _, dnu = radial_derivative(f, (0.0, 0.0), 0.3)
    np.testing.assert_allclose(dnu, 0.6, rtol=1e-8)


def test_spline_interpolation_reproduces_cubics():
    g = Grid2D.square(0.0, 1.0, 33)
    f = ScalarField.from_function(g, lambda X, Y: X**3 - 2 * X * Y + Y**2)
    xs, ys = np.array([0.13, 0.71]), np.array([0.44, 0.09])
    np.testing.assert_allclose(f.interpolate(xs, ys), xs**3 - 2 * xs * ys + ys**2, atol=1e-12)


def test_laplacian_and_gradient_of_quadratic():
    g = Grid2D.square(0.0, 1.0, 33)
    f = ScalarField.from_function(g, lambda X, Y: X * X + 3 * Y * Y)
    lap = laplacian(f)
    m = interior_mask(g)
    np.testing.assert_allclose(lap.values[m], 8.0, atol=1e-9)
    assert np.isnan(lap.values[0, 0])
    gr = gradient(f)
    X, Y = g.mesh()
    np.testing.assert_allclose(gr.values[1][m], 6 * Y[m], atol=1e-9)


def test_weighted_sum_ignores_nan_at_zero_weight():
    v = np.array([1.0, np.nan, 2.0])
    w = np.array([0.5, 0.0, 0.25])
    assert weighted_sum(v, w) == pytest.approx(1.0)


def test_scalar_field_rejects_nonfinite():
    g = Grid2D.square(0.0, 1.0, 17)
    v = np.zeros(g.shape)
    v[3, 3] = np.inf
    with pytest.raises(ValueError):
        ScalarField(g, v)
