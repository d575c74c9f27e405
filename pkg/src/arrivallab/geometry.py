"""Convex plane curves in support-function form.

A smooth, strictly convex curve is stored as samples of its support function
h(theta) on the uniform angle grid, together with the origin the support
values are measured from. The boundary point with outward normal
nu(theta) = (cos theta, sin theta) is

    x(theta) = origin + h * nu + h' * t,      t = (-sin theta, cos theta),

and the radius of curvature is rho = h'' + h, which must stay positive.
All geometric quantities (curvature, area, Steiner point, containment tests)
are derived from these samples. Angle derivatives use the spectral scheme by
default; see differentiation.py.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .differentiation import SCHEMES, periodic_derivative, theta_grid
from .errors import ConfigError, ConvexityLost

# Strict-convexity floor for the curvature radius rho = h'' + h.
RHO_FLOOR = 1e-10

# Support residuals in [-CONTAINS_TIE, 0] count as outside: points within
# round-off of the boundary are not claimed as interior.
CONTAINS_TIE = 1e-12

_ALLOWED_SIZES = tuple(2 ** k for k in range(6, 12))  # 64 .. 2048


def _check_grid_size(n: int) -> None:
    if n not in _ALLOWED_SIZES:
        raise ConfigError(
            f"angle grid size must be a power of two in [64, 2048], got {n}")


@dataclass(frozen=True)
class BoundaryPoint:
    """A point on the curve with its local data."""

    position: np.ndarray
    normal: np.ndarray
    curvature: float
    theta: float


@dataclass(frozen=True)
class SupportCurve:
    """Strictly convex closed curve sampled in support-function form."""

    h: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scheme: str = "spectral"

    def __post_init__(self) -> None:
        h = np.asarray(self.h, dtype=float)
        origin = np.asarray(self.origin, dtype=float)
        if h.ndim != 1:
            raise ConfigError("support samples must be one-dimensional")
        _check_grid_size(h.size)
        if origin.shape != (2,):
            raise ConfigError("origin must be a 2-vector")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown derivative scheme {self.scheme!r}")
        if not np.all(np.isfinite(h)):
            raise ConfigError("support samples must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "origin", origin)
        rho = self.curvature_radius()
        if rho.min() <= RHO_FLOOR:
            raise ConvexityLost(
                f"curvature radius min {rho.min():.3e} at or below floor "
                f"{RHO_FLOOR:.0e}")

    @property
    def n(self) -> int:
        return self.h.size

    @property
    def thetas(self) -> np.ndarray:
        return theta_grid(self.n)

    def normals(self) -> np.ndarray:
        th = self.thetas
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    def tangents(self) -> np.ndarray:
        th = self.thetas
        return np.stack([-np.sin(th), np.cos(th)], axis=-1)

    def h_theta(self, order: int = 1) -> np.ndarray:
        return periodic_derivative(self.h, order, scheme=self.scheme)

    def curvature_radius(self) -> np.ndarray:
        """rho = h'' + h, the inverse curvature, at each grid angle."""
        return self.h_theta(2) + self.h

    def curvature(self) -> np.ndarray:
        return 1.0 / self.curvature_radius()

    def boundary_points(self) -> np.ndarray:
        """Positions x(theta_j), shape (n, 2)."""
        hp = self.h_theta(1)
        return (self.origin + self.h[:, None] * self.normals()
                + hp[:, None] * self.tangents())

    def boundary_point(self, j: int) -> BoundaryPoint:
        pts = self.boundary_points()
        kappa = self.curvature()
        th = self.thetas
        j = int(j) % self.n
        return BoundaryPoint(position=pts[j], normal=self.normals()[j],
                             curvature=float(kappa[j]), theta=float(th[j]))

    def arclength_derivatives(self, values: np.ndarray) -> tuple[np.ndarray,
                                                                 np.ndarray]:
        """First and second arclength derivatives of boundary samples.

        ds = rho dtheta along the curve, so d/ds = (1/rho) d/dtheta applied
        twice for the second derivative (rho varies, the operators do not
        commute with it).
        """
        rho = self.curvature_radius()
        v_s = periodic_derivative(values, 1, scheme=self.scheme) / rho
        v_ss = periodic_derivative(v_s, 1, scheme=self.scheme) / rho
        return v_s, v_ss

    def support_residual(self, points: np.ndarray) -> np.ndarray:
        """max_j [(x - origin) . nu_j - h_j] for each query point.

        Negative inside, zero on the boundary, positive outside (equals the
        largest signed distance to the family of support lines).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.origin
        return (rel @ self.normals().T - self.h).max(axis=-1)

    def contains(self, point: np.ndarray) -> bool:
        """Strict interior test; boundary ties resolve to outside."""
        return bool(self.support_residual(point)[0] < -CONTAINS_TIE)

    def boundary_distance(self, point: np.ndarray) -> float:
        """Distance from an interior point to the curve.

        For convex bodies this is min_theta (h - (x - origin) . nu), valid
        when the point is inside.
        """
        rel = np.asarray(point, dtype=float) - self.origin
        gaps = self.h - self.normals() @ rel
        return float(gaps.min())

    def area(self) -> float:
        """Enclosed area (1/2) integral (h^2 - h'^2) dtheta."""
        hp = self.h_theta(1)
        dtheta = 2.0 * np.pi / self.n
        return float(0.5 * np.sum(self.h ** 2 - hp ** 2) * dtheta)

    def steiner_point(self) -> np.ndarray:
        """Curvature centroid origin + (1/pi) integral h nu dtheta."""
        dtheta = 2.0 * np.pi / self.n
        return self.origin + (self.h[:, None] * self.normals()).sum(0) \
            * dtheta / np.pi

    def inradius(self, witness: np.ndarray | None = None) -> float:
        """Largest boundary distance from the witness point (default the
        Steiner point, which is always interior for convex bodies)."""
        if witness is None:
            witness = self.steiner_point()
        return self.boundary_distance(witness)

    def translate_origin(self, new_origin: np.ndarray) -> "SupportCurve":
        """Re-express the same curve with support measured from new_origin."""
        new_origin = np.asarray(new_origin, dtype=float)
        shift = new_origin - self.origin
        h_new = self.h - self.normals() @ shift
        return replace(self, h=h_new, origin=new_origin)


def circle_curve(radius: float, center: Iterable[float] = (0.0, 0.0),
                 n: int = 256, scheme: str = "spectral") -> SupportCurve:
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    center = np.asarray(tuple(center), dtype=float)
    h = np.full(n, float(radius))
    # Support measured from the center keeps h constant.
    return SupportCurve(h=h, origin=center, scheme=scheme)


def ellipse_curve(a: float, b: float, center: Iterable[float] = (0.0, 0.0),
                  n: int = 256, scheme: str = "spectral") -> SupportCurve:
    """Axis-aligned ellipse with semi-axes a (x) and b (y)."""
    if a <= 0 or b <= 0:
        raise ConfigError(f"semi-axes must be positive, got ({a}, {b})")
    th = theta_grid(n)
    h = np.sqrt((a * np.cos(th)) ** 2 + (b * np.sin(th)) ** 2)
    return SupportCurve(h=h, origin=np.asarray(tuple(center), dtype=float),
                        scheme=scheme)


def fourier_curve(base: float, cos_coeffs: dict[int, float] | None = None,
                  sin_coeffs: dict[int, float] | None = None,
                  center: Iterable[float] = (0.0, 0.0), n: int = 256,
                  scheme: str = "spectral") -> SupportCurve:
    """Support function base + sum a_k cos(k theta) + b_k sin(k theta).

    Modes k = 1 translate the curve rather than change its shape, so they are
    rejected; coefficients must leave rho = h'' + h positive, which is checked
    by construction.
    """
    th = theta_grid(n)
    h = np.full(n, float(base))
    for coeffs, basis in ((cos_coeffs or {}, np.cos), (sin_coeffs or {},
                                                       np.sin)):
        for k, c in coeffs.items():
            k = int(k)
            if k < 2:
                raise ConfigError(
                    f"fourier mode {k} is a translation or constant; use "
                    "base/center instead")
            h = h + float(c) * basis(k * th)
    return SupportCurve(h=h, origin=np.asarray(tuple(center), dtype=float),
                        scheme=scheme)
