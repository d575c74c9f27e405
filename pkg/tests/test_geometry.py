"""Support-function geometry against closed forms and convexity rules."""

import numpy as np
import pytest

from arrivallab.errors import ConfigError, ConvexityLost
from arrivallab.geometry import (SupportCurve, circle_curve, ellipse_curve,
                                 fourier_curve)

# ---------------------------------------------------------------------------
# closed forms


def test_circle_closed_forms():
    r = 0.7
    c = circle_curve(r, center=(0.2, -0.1), n=128)
    assert np.allclose(c.h, r)
    assert np.allclose(c.curvature(), 1.0 / r, atol=1e-12)
    pts = c.boundary_points()
    assert np.allclose(np.hypot(pts[:, 0] - 0.2, pts[:, 1] + 0.1), r)
    assert np.isclose(c.area(), np.pi * r ** 2, rtol=1e-12)
    assert np.allclose(c.steiner_point(), [0.2, -0.1], atol=1e-12)
    assert np.isclose(c.inradius(), r, atol=1e-12)


def test_ellipse_closed_forms():
    a, b = 2.0, 1.0
    e = ellipse_curve(a, b, n=256)
    pts = e.boundary_points()
    assert np.allclose((pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2, 1.0,
                       atol=1e-10)
    assert np.isclose(e.area(), np.pi * a * b, rtol=1e-10)
    kappa = e.curvature()
    assert np.isclose(kappa.min(), b / a ** 2, rtol=1e-8)
    assert np.isclose(kappa.max(), a / b ** 2, rtol=1e-8)


def test_boundary_point_wraps_and_carries_local_data():
    c = circle_curve(1.0, n=64)
    p = c.boundary_point(64 + 3)
    q = c.boundary_point(3)
    assert np.allclose(p.position, q.position)
    assert np.isclose(p.curvature, 1.0)
    assert np.isclose(p.theta, q.theta)
    assert np.allclose(p.normal, p.position)  # unit circle about the origin


def test_arclength_derivatives_circle():
    r = 2.0
    c = circle_curve(r, n=128)
    values = np.cos(c.thetas)
    v_s, v_ss = c.arclength_derivatives(values)
    assert np.allclose(v_s, -np.sin(c.thetas) / r, atol=1e-12)
    assert np.allclose(v_ss, -np.cos(c.thetas) / r ** 2, atol=1e-12)


# ---------------------------------------------------------------------------
# point queries


def test_support_residual_sign_convention():
    c = circle_curve(1.0, n=128)
    inside = c.support_residual(np.array([0.3, 0.0]))
    outside = c.support_residual(np.array([1.5, 0.0]))
    assert inside[0] < 0.0
    assert outside[0] > 0.0
    on_boundary = c.support_residual(c.boundary_points()[:8])
    assert np.max(np.abs(on_boundary)) < 1e-10


def test_contains_and_boundary_distance():
    c = circle_curve(1.0, n=128)
    assert c.contains(np.array([0.9, 0.0]))
    assert not c.contains(np.array([1.1, 0.0]))
    assert np.isclose(c.boundary_distance(np.array([0.25, 0.0])), 0.75,
                      atol=1e-6)


def test_translate_origin_preserves_the_curve():
    e = ellipse_curve(1.5, 1.0, n=128)
    moved = e.translate_origin(np.array([0.3, -0.2]))
    assert np.allclose(moved.boundary_points(), e.boundary_points(),
                       atol=1e-10)
    assert np.isclose(moved.area(), e.area(), rtol=1e-10)


# ---------------------------------------------------------------------------
# validation


def test_grid_size_must_be_power_of_two_in_range():
    for n in (32, 100, 4096):
        with pytest.raises(ConfigError):
            circle_curve(1.0, n=n)


def test_constructor_rejects_bad_data():
    with pytest.raises(ConfigError):
        SupportCurve(h=np.ones((2, 64)))
    with pytest.raises(ConfigError):
        SupportCurve(h=np.ones(64), origin=np.zeros(3))
    with pytest.raises(ConfigError):
        SupportCurve(h=np.ones(64), scheme="fd2")
    h = np.ones(64)
    h[3] = np.nan
    with pytest.raises(ConfigError):
        SupportCurve(h=h)


def test_nonconvex_support_rejected():
    th = np.linspace(0.0, 2.0 * np.pi, 128, endpoint=False)
    # rho = h'' + h = 1 - 3 cos(2 theta) dips negative.
    with pytest.raises(ConvexityLost):
        SupportCurve(h=1.0 + np.cos(2 * th))


def test_fourier_modes_below_two_rejected():
    with pytest.raises(ConfigError):
        fourier_curve(1.0, {1: 0.1})
    with pytest.raises(ConfigError):
        fourier_curve(1.0, sin_coeffs={0: 0.1})


def test_factory_argument_validation():
    with pytest.raises(ConfigError):
        circle_curve(-1.0)
    with pytest.raises(ConfigError):
        ellipse_curve(2.0, 0.0)


# ---------------------------------------------------------------------------
# invariants on random convex curves


def test_random_fourier_curves_invariants():
    rng = np.random.default_rng(7)
    for _ in range(20):
        cos_c = {int(k): rng.uniform(-0.02, 0.02) for k in (2, 3, 5)}
        sin_c = {4: rng.uniform(-0.015, 0.015)}
        curve = fourier_curve(1.0, cos_c, sin_c, n=128)
        assert curve.area() > 0.0
        assert curve.curvature().min() > 0.0
        residual = curve.support_residual(curve.boundary_points())
        assert np.max(np.abs(residual)) < 1e-9
        steiner = curve.steiner_point()
        assert curve.contains(steiner)
        assert 0.0 < curve.inradius() <= np.max(curve.h) + 1e-12
