"""Arrival-time reconstruction against circle closed forms.

For the unit circle under F = kappa^alpha the arrival time is radial,
u(x) = (1 - |x|^(1+alpha)) / (1+alpha), the sqrt_power transform is
w(x) = (1 - |x|^(1+alpha))^(1/(1+alpha)), and for alpha = 1 the graph of
w is the unit hemisphere with D2w(0) = -I.
"""

import numpy as np
import pytest

from arrivallab.arrival import (BOUNDARY_LAYER, EXTERIOR, EXTINCTION_BALL,
                                INTERIOR, TRANSFORM_KINDS, ArrivalField,
                                level_set_residual, reconstruct,
                                synthetic_field, transform,
                                transformed_derivatives, u_derivatives)
from arrivallab.errors import ConfigError
from arrivallab.flow import FlowOptions, run
from arrivallab.geometry import circle_curve
from arrivallab.speeds import make_speed


def circle_u(alpha):
    return lambda x, y: (1.0 - np.hypot(x, y) ** (1 + alpha)) / (1 + alpha)


# ---------------------------------------------------------------------------
# reconstruction accuracy


@pytest.mark.parametrize("alpha", [1.0, 3.0])
def test_circle_arrival_matches_closed_form(alpha, request):
    fixture = "circle_mcf" if alpha == 1.0 else "circle_alpha3"
    traj, field = request.getfixturevalue(fixture)
    exact = circle_u(alpha)(*np.moveaxis(field.point_grid(), -1, 0))
    ok = field.mask == INTERIOR
    err = np.max(np.abs(field.u - exact)[ok])
    assert err < 1e-6


def test_mask_classification(circle_mcf):
    _, field = circle_mcf
    grid_r = np.hypot(*np.moveaxis(field.point_grid(), -1, 0))
    assert np.all(field.mask[grid_r > 1.0 + 4 * field.dx] == EXTERIOR)
    assert np.all(np.isin(field.mask[grid_r < 0.5], (INTERIOR,
                                                     EXTINCTION_BALL)))
    # The extinction ball hugs the extinction point.
    ball = field.mask == EXTINCTION_BALL
    assert ball.any()
    assert np.max(grid_r[ball]) < 0.1
    # A thin startup band along the initial curve separates it from the
    # interior verdict region.
    band = field.mask == BOUNDARY_LAYER
    assert band.any()
    assert np.min(grid_r[band]) > 0.8


def test_extinction_metadata(circle_mcf):
    _, field = circle_mcf
    assert np.isclose(field.t_ext, 0.5, atol=1e-6)
    assert np.allclose(field.p_ext, 0.0, atol=1e-6)
    assert field.alpha == 1.0
    assert field.t0 == 0.0


def test_value_at_interpolates(circle_mcf):
    _, field = circle_mcf
    pts = np.array([[0.3, 0.2], [-0.4, 0.1], [2.0, 2.0]])
    vals, ok = field.value_at(pts)
    exact = circle_u(1.0)(pts[:, 0], pts[:, 1])
    assert ok[0] and ok[1] and not ok[2]
    # Bilinear between nodes: error ~ dx^2 |D2u| / 8 with dx = 1/64.
    assert np.allclose(vals[:2], exact[:2], atol=1e-4)


def test_level_set_residual_small_on_circle(circle_mcf):
    _, field = circle_mcf
    report = level_set_residual(field, make_speed("kappa"), order=4,
                                exclude_radius=0.1)
    assert report.cells > 1000
    assert report.worst < 1e-4


def test_reconstruct_validation(circle_mcf):
    traj, _ = circle_mcf
    with pytest.raises(ConfigError):
        reconstruct(traj, 1.0 / 64, time_interp="spline")
    with pytest.raises(ConfigError):
        reconstruct(traj, 1.0 / 64, theta_refine=3)


# ---------------------------------------------------------------------------
# transforms


def test_transform_kinds_and_validation(circle_mcf):
    _, field = circle_mcf
    assert set(TRANSFORM_KINDS) == {"sqrt_power", "log", "identity"}
    with pytest.raises(ConfigError):
        transform(field, "exp")
    with pytest.raises(ConfigError):
        transform(field, "log", t_ref=field.t0 + 0.1)
    ident = transform(field, "identity")
    inside = field.mask == INTERIOR
    assert np.allclose(ident.values[inside], field.u[inside])


def test_sqrt_power_transform_closed_form(circle_mcf):
    _, field = circle_mcf
    w = transform(field, "sqrt_power")
    grid_r = np.hypot(*np.moveaxis(field.point_grid(), -1, 0))
    inside = field.mask == INTERIOR
    expected = np.sqrt(1.0 - grid_r[inside] ** 2)
    assert np.max(np.abs(w.values[inside] - expected)) < 1e-6


def test_log_transform_masks_singular_cells(circle_mcf):
    _, field = circle_mcf
    lg = transform(field, "log")
    outside = field.mask == EXTERIOR
    assert np.all(np.isnan(lg.values[outside]))
    inside = field.mask == INTERIOR
    assert np.all(np.isfinite(lg.values[inside]))


def test_hemisphere_hessian_at_center():
    # Analytic field, no reconstruction: u = (1 - r^2)/2, w = sqrt(1 - r^2),
    # whose graph is the unit hemisphere with D2w = -I at the pole. The box
    # stays inside the unit disk so w is real everywhere on it.
    field = synthetic_field(circle_u(1.0), (-0.5, 0.5, -0.5, 0.5),
                            dx=1.0 / 64, t_ext=0.5)
    tf = transform(field, "sqrt_power")
    derivs = transformed_derivatives(tf, order=4)
    i = j = field.shape[0] // 2  # grid node exactly at the origin
    hess = np.array([[derivs.hxx[i, j], derivs.hxy[i, j]],
                     [derivs.hxy[i, j], derivs.hyy[i, j]]])
    assert np.allclose(hess, -np.eye(2), atol=1e-5)


def test_transform_and_direct_derivatives_agree_inside():
    field = synthetic_field(circle_u(1.0), (-0.5, 0.5, -0.5, 0.5),
                            dx=1.0 / 64, t_ext=0.5)
    tf = transform(field, "sqrt_power")
    a = transformed_derivatives(tf, order=2, method="transform")
    b = transformed_derivatives(tf, order=2, method="direct")
    # Away from the boundary w is smooth, so the routes agree to stencil
    # accuracy.
    core = (slice(4, -4), slice(4, -4))
    assert np.allclose(a.hxx[core], b.hxx[core], atol=1e-3)
    with pytest.raises(ConfigError):
        transformed_derivatives(tf, method="adjoint")


def test_u_derivatives_on_quadratic():
    field = synthetic_field(lambda x, y: x ** 2 - 0.5 * x * y + 3.0 * y ** 2,
                            (-1, 1, -1, 1), dx=1.0 / 32)
    d = u_derivatives(field, order=2)
    inner = (slice(2, -2), slice(2, -2))
    assert np.allclose(d.hxx[inner], 2.0, atol=1e-9)
    assert np.allclose(d.hxy[inner], -0.5, atol=1e-9)
    assert np.allclose(d.hyy[inner], 6.0, atol=1e-9)


# ---------------------------------------------------------------------------
# persistence


def test_save_load_roundtrip(tmp_path, circle_mcf):
    _, field = circle_mcf
    field.save(tmp_path / "field")
    back = ArrivalField.load(tmp_path / "field")
    assert np.array_equal(back.mask, field.mask)
    assert np.allclose(back.u, field.u, rtol=0, atol=0)
    assert back.dx == field.dx
    assert back.alpha == field.alpha
    assert back.speed_name == field.speed_name
    assert np.allclose(back.p_ext, field.p_ext)


# ---------------------------------------------------------------------------
# refinement


def test_reconstruction_error_falls_with_direction_count():
    # Node values come from a per-node crossing search, so the resolution
    # axis of the reconstruction is the direction count, not dx.
    errs = []
    for n in (64, 128):
        traj = run(circle_curve(1.0, n=n), make_speed("kappa"),
                   options=FlowOptions(cfl=0.15))
        field = reconstruct(traj, 1.0 / 32)
        exact = circle_u(1.0)(*np.moveaxis(field.point_grid(), -1, 0))
        ok = field.verdict_cells()
        errs.append(np.max(np.abs(field.u - exact)[ok]))
    assert errs[1] < errs[0]
    assert errs[1] < 1e-10
