"""Shared fixtures: small flow scenarios and synthetic fields.

The session-scoped flows run at reduced resolution (128 directions, grid
spacing 1/64) so the whole unit suite stays fast; the acceptance suite
builds its own full-resolution scenarios.
"""

import numpy as np
import pytest

from arrivallab.arrival import INTERIOR, ArrivalField, reconstruct
from arrivallab.flow import FlowOptions, run
from arrivallab.geometry import circle_curve, ellipse_curve
from arrivallab.speeds import CurveSpeed, make_speed


def flow_scenario(curve, alpha, dx, theta_refine=1):
    speed = CurveSpeed(make_speed("kappa", alpha=alpha))
    traj = run(curve, speed, options=FlowOptions(cfl=0.15))
    return traj, reconstruct(traj, dx, theta_refine=theta_refine)


@pytest.fixture(scope="session")
def circle_mcf():
    """Unit circle under curve shortening: (trajectory, arrival field)."""
    return flow_scenario(circle_curve(1.0, n=128), 1.0, 1.0 / 64)


@pytest.fixture(scope="session")
def circle_alpha3():
    """Unit circle under the cubed-curvature flow."""
    return flow_scenario(circle_curve(1.0, n=128), 3.0, 1.0 / 64)


@pytest.fixture(scope="session")
def ellipse_mcf():
    """2:1 ellipse under curve shortening, angularly refined."""
    return flow_scenario(ellipse_curve(2.0, 1.0, n=128), 1.0, 1.0 / 64,
                         theta_refine=2)


@pytest.fixture
def synthetic_field():
    """Factory for all-interior fields u = fn(x, y) on a centered square."""

    def build(fn, half=1.0, m=129, alpha=1.0, t0=0.0):
        xs = np.linspace(-half, half, m)
        grid_x, grid_y = np.meshgrid(xs, xs, indexing="ij")
        u = np.asarray(fn(grid_x, grid_y), dtype=float)
        return ArrivalField(
            u=u, mask=np.full(u.shape, INTERIOR, dtype=np.uint8),
            x0=-half, y0=-half, dx=float(xs[1] - xs[0]), t0=t0,
            t_ext=float(u.max()), p_ext=np.zeros(2), alpha=alpha,
            speed_name="synthetic", inradius0=float(half))

    return build
