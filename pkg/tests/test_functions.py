"""Test-function families, quadrature, Gaussian smoothing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtr

from freedyn.functions import (
    TestFunction,
    box_quad,
    gauss_smooth,
    gauss_smooth_box_torus,
    integrate_function,
    integrate_product,
)


def test_box_values_half_open():
    f = TestFunction.box(-0.5, (0.0,), (1.0,))
    vals = f(np.array([[0.0], [0.5], [1.0], [1.5]]))
    assert np.allclose(vals, [-0.5, -0.5, 0.0, 0.0])


def test_box_integral_closed_form():
    f = TestFunction.box(-0.25, (0.0, 1.0), (2.0, 3.0))
    assert f.integral() == pytest.approx(-0.25 * 4.0)


def test_level_constraint():
    # admissible levels are -1 < level <= 0
    with pytest.raises(ValueError):
        TestFunction.box(0.5, (0.0,), (1.0,))
    with pytest.raises(ValueError):
        TestFunction.box(-1.0, (0.0,), (1.0,))
    TestFunction.box(0.0, (0.0,), (1.0,))  # boundary level allowed


def test_bump_peak_and_support():
    f = TestFunction.bump(-0.5, (1.0,), 2.0)
    assert f(np.array([[1.0]]))[0] == pytest.approx(-0.5)
    assert f(np.array([[3.0], [-1.0], [5.0]])) == pytest.approx([0.0, 0.0, 0.0])


def test_bump_integral_frozen():
    f = TestFunction.bump(-0.5, (0.0,), 1.0)
    assert f.integral() == pytest.approx(-0.6034501612189381, abs=1e-12)
    # independent check by vectorized trapezoid on a fine grid
    xs = np.linspace(-1.0, 1.0, 200001)
    grid = np.trapezoid(f(xs[:, None]), xs)
    assert grid == pytest.approx(f.integral(), abs=1e-8)


def test_bump_gradient_matches_finite_difference():
    f = TestFunction.bump(-0.5, (0.0, 0.0), 1.5)
    pts = np.array([[0.3, -0.4], [0.9, 0.2]])
    g = f.gradient(pts)
    h = 1e-6
    for k in range(2):
        shift = np.zeros(2)
        shift[k] = h
        fd = (f(pts + shift) - f(pts - shift)) / (2 * h)
        assert np.allclose(g[:, k], fd, atol=1e-5)


def test_bump_laplacian_matches_finite_difference():
    f = TestFunction.bump(-0.5, (0.0,), 1.5)
    pts = np.array([[0.3], [0.7]])
    h = 1e-4
    fd = (f(pts + h) - 2 * f(pts) + f(pts - h)) / h**2
    assert np.allclose(f.laplacian(pts), fd, atol=1e-4)


def test_product_integral():
    a = TestFunction.box(-0.5, (0.0,), (1.0,))
    b = TestFunction.box(-0.6, (0.5,), (2.0,))
    # overlap [0.5, 1.0), product level 0.3
    assert a.product(b).integral() == pytest.approx(0.15)
    assert integrate_product([a, b]) == pytest.approx(0.15)


def test_box_quad_matches_quadrature():
    f = TestFunction.bump(-0.5, (0.0,), 1.0)
    val = box_quad(lambda pts: f(pts) ** 2, np.array([-1.0]), np.array([1.0]))
    xs = np.linspace(-1.0, 1.0, 100001)
    assert val == pytest.approx(np.trapezoid(f(xs[:, None]) ** 2, xs), abs=1e-7)


def test_integrate_function_agrees_with_integral():
    for f in (
        TestFunction.box(-0.3, (0.0, 0.0), (1.0, 2.0)),
        TestFunction.bump(-0.9, (0.5,), 0.7),
    ):
        assert integrate_function(f) == pytest.approx(f.integral(), abs=1e-9)


def test_gauss_smooth_box_closed_form():
    f = TestFunction.box(-0.5, (0.0,), (2.0,))
    pts = np.array([[0.0], [1.0], [2.5]])
    var = 0.49
    sm = gauss_smooth(f, var, pts)
    s = np.sqrt(var)
    expected = -0.5 * (ndtr((2.0 - pts[:, 0]) / s) - ndtr((0.0 - pts[:, 0]) / s))
    assert np.allclose(sm, expected, atol=1e-12)


def test_gauss_smooth_bump_against_numeric_convolution():
    f = TestFunction.bump(-0.5, (0.0,), 1.0)
    var = 0.25
    pts = np.array([[0.0], [0.8], [1.6]])
    sm = gauss_smooth(f, var, pts)
    ys = np.linspace(-1.0, 1.0, 20001)
    fy = f(ys[:, None])
    for row, x in zip(sm, pts[:, 0]):
        kern = np.exp(-((x - ys) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
        assert row == pytest.approx(np.trapezoid(fy * kern, ys), abs=1e-6)


def test_gauss_smooth_torus_image_sum():
    side = 5.0
    f = TestFunction.box(-0.5, (1.0,), (2.0,))
    pts = np.array([[0.2], [4.9]])
    var = 1.0
    sm = gauss_smooth_box_torus(f, var, pts, side)
    s = np.sqrt(var)
    # direct image sum over many copies of the box
    expected = np.zeros(2)
    for k in range(-40, 41):
        lo, hi = 1.0 + k * side, 2.0 + k * side
        expected += -0.5 * (ndtr((hi - pts[:, 0]) / s) - ndtr((lo - pts[:, 0]) / s))
    assert np.allclose(sm, expected, atol=1e-12)
    # smoothing conserves mass on the torus: integral over the cell
    xs = np.linspace(0.0, side, 40001)
    total = np.trapezoid(gauss_smooth_box_torus(f, var, xs[:, None], side), xs)
    assert total == pytest.approx(f.integral(), abs=1e-8)


@given(
    level=st.floats(min_value=-0.99, max_value=0.0),
    lo=st.floats(min_value=-5.0, max_value=4.0),
    width=st.floats(min_value=0.01, max_value=3.0),
)
@settings(max_examples=100, deadline=None)
def test_box_integral_property(level, lo, width):
    f = TestFunction.box(level, (lo,), (lo + width,))
    assert f.integral() == pytest.approx(level * width, rel=1e-12, abs=1e-12)


@given(
    level=st.floats(min_value=-0.9, max_value=-0.01),
    radius=st.floats(min_value=0.1, max_value=3.0),
)
@settings(max_examples=50, deadline=None)
def test_bump_class_d_property(level, radius):
    f = TestFunction.bump(level, (0.0,), radius)
    xs = np.linspace(-radius, radius, 501)[:, None]
    vals = f(xs)
    assert np.all(vals <= 0.0) and np.all(vals > -1.0)
    assert abs(f.integral()) <= abs(level) * 2 * radius
