"""Arrival-time reconstruction and the level-set identities it must satisfy.

The arrival time u(p) of a contracting flow is the time the moving boundary
sweeps past p. In support form that is the first time any support line
reaches p: with g_j(p) = (p - origin) . nu_j, direction theta_j crosses p
when h(theta_j, t) = g_j(p), and u(p) is the minimum crossing time over all
directions (the body is the intersection of its support half-planes).

Two ingredients keep the reconstruction smooth enough for second
derivatives:

* Between stored snapshots, h(theta_j, .) is interpolated as a cubic Hermite
  in the model radius lambda(t) = ((1+alpha)(T_ext - t))^(1/(1+alpha)), with
  exact slopes dh/dlambda = F * lambda^alpha from the stored speed. For a
  shrinking circle h is linear in lambda, so the interpolation is exact
  there, and for nearby shapes the quartic error term is uniformly tiny
  relative to the snapshot spacing.

* The minimum over the direction grid is refined in the continuous angle: a
  degree-six polynomial through the seven crossing values around the best
  direction is maximized (in lambda; minimized in time). Without this the
  node minimum carries an angle-phase error of order dtheta^2 at sub-grid
  wavelength, which second differences amplify catastrophically.

Grid cells are classified by mask: verification should trust derivatives
only on INTERIOR cells whose stencils stay off EXTERIOR cells; values (not
derivatives) are also usable on BOUNDARY_LAYER and EXTINCTION_BALL cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import (ConfigError, DegenerateGradient, MaskedPoint,
                     NonMonotoneContainment)
from .flow import FlowTrajectory
from .geometry import CONTAINS_TIE
from .speeds import CURVATURE_FLOOR, SpeedSpec
from .stencils import bilinear, erode, gradient, hessian, stencil_radius

INTERIOR = 0
BOUNDARY_LAYER = 1
EXTINCTION_BALL = 2
EXTERIOR = 3

TRANSFORM_KINDS = ("sqrt_power", "log", "identity")

# Gradient magnitudes below this are treated as degenerate in level-set
# formulas (|Du| = 1/F is bounded away from zero on interior cells).
GRADIENT_FLOOR = 1e-12


class FieldDerivs(NamedTuple):
    """First and second derivatives of a scalar grid field."""

    gx: np.ndarray
    gy: np.ndarray
    hxx: np.ndarray
    hxy: np.ndarray
    hyy: np.ndarray


@dataclass(frozen=True)
class ArrivalField:
    """Arrival time sampled on a uniform node grid x0 + i dx, y0 + j dx."""

    u: np.ndarray
    mask: np.ndarray
    x0: float
    y0: float
    dx: float
    t0: float
    t_ext: float
    p_ext: np.ndarray
    alpha: float
    speed_name: str
    inradius0: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def xs(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.u.shape[0])

    def ys(self) -> np.ndarray:
        return self.y0 + self.dx * np.arange(self.u.shape[1])

    def point_grid(self) -> np.ndarray:
        """Node coordinates, shape (nx, ny, 2)."""
        gx, gy = np.meshgrid(self.xs(), self.ys(), indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def value_valid(self) -> np.ndarray:
        """Cells whose u value is a reconstructed arrival time."""
        return self.mask != EXTERIOR

    def stencil_valid(self, order: int = 2) -> np.ndarray:
        """Cells whose derivative stencil of the given order avoids
        EXTERIOR data and the grid rim."""
        return erode(self.value_valid(), stencil_radius(order))

    def verdict_cells(self, order: int = 2,
                      exclude_radius: float | None = None,
                      skip_early: float = 0.0) -> np.ndarray:
        """INTERIOR cells eligible for derivative-based verification.

        exclude_radius additionally drops cells within that distance of the
        extinction point (arrival time loses regularity there). skip_early
        drops cells swept within that fraction of the flow's life: eccentric
        initial data carries a startup layer where arrival-time derivatives
        are set by the raw speed contrast of the initial curve, and fixed-
        order stencils cannot be trusted there (interpolation-based checks
        still cover the band).
        """
        ok = self.stencil_valid(order) & (self.mask == INTERIOR)
        if exclude_radius is not None:
            ok &= self.extinction_distance() > exclude_radius
        if skip_early > 0.0:
            ok &= self.u - self.t0 > skip_early * (self.t_ext - self.t0)
        return ok

    def extinction_distance(self) -> np.ndarray:
        rel = self.point_grid() - self.p_ext
        return np.hypot(rel[..., 0], rel[..., 1])

    def value_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear arrival time at arbitrary points, with validity."""
        return bilinear(self.u, self.x0, self.y0, self.dx,
                        points, valid=self.value_valid())

    # -- serialization -----------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "x0": self.x0, "y0": self.y0, "dx": self.dx,
            "t0": self.t0, "t_ext": self.t_ext,
            "p_ext": self.p_ext.tolist(), "alpha": self.alpha,
            "speed_name": self.speed_name, "inradius0": self.inradius0,
            "shape": list(self.u.shape),
        }
        (directory / "field.json").write_text(json.dumps(meta, indent=2))
        xs, ys = self.xs(), self.ys()
        with open(directory / "arrival.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "u", "mask"])
            for i in range(self.u.shape[0]):
                for j in range(self.u.shape[1]):
                    # repr of builtin floats round-trips exactly.
                    writer.writerow([repr(float(xs[i])), repr(float(ys[j])),
                                     repr(float(self.u[i, j])),
                                     int(self.mask[i, j])])

    @staticmethod
    def load(directory: str | Path) -> "ArrivalField":
        directory = Path(directory)
        meta = json.loads((directory / "field.json").read_text())
        nx, ny = meta["shape"]
        u = np.empty((nx, ny))
        mask = np.empty((nx, ny), dtype=np.uint8)
        with open(directory / "arrival.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            dx = meta["dx"]
            for row in reader:
                i = round((float(row["x"]) - meta["x0"]) / dx)
                j = round((float(row["y"]) - meta["y0"]) / dx)
                u[i, j] = float(row["u"])
                mask[i, j] = int(row["mask"])
        return ArrivalField(
            u=u, mask=mask, x0=meta["x0"], y0=meta["y0"], dx=dx,
            t0=meta["t0"], t_ext=meta["t_ext"],
            p_ext=np.asarray(meta["p_ext"], dtype=float),
            alpha=meta["alpha"], speed_name=meta["speed_name"],
            inradius0=meta["inradius0"])


# --------------------------------------------------------------------------
# Reconstruction


# Inverse Vandermonde for the degree-six fit on offsets -3..3.
_XI7 = np.arange(-3.0, 4.0)
_VINV7 = np.linalg.inv(np.vander(_XI7, 7, increasing=True))


def _hermite_solve(g: np.ndarray, la: np.ndarray, lb: np.ndarray,
                   ha: np.ndarray, hb: np.ndarray, da: np.ndarray,
                   db: np.ndarray) -> np.ndarray:
    """Solve the cubic Hermite h(lambda) = g on [la, lb], vectorized.

    The interpolant is monotone for this data (positive end slopes close to
    the secant), so a few clipped Newton iterations from the secant guess
    converge everywhere.
    """
    span = lb - la
    sec = hb - ha
    s = np.clip((g - ha) / sec, 0.0, 1.0)
    c_a = da * span
    c_b = db * span
    for _ in range(4):
        s2 = s * s
        s3 = s2 * s
        val = ((2.0 * s3 - 3.0 * s2 + 1.0) * ha
               + (s3 - 2.0 * s2 + s) * c_a
               + (-2.0 * s3 + 3.0 * s2) * hb
               + (s3 - s2) * c_b) - g
        der = ((6.0 * s2 - 6.0 * s) * ha
               + (3.0 * s2 - 4.0 * s + 1.0) * c_a
               + (-6.0 * s2 + 6.0 * s) * hb
               + (3.0 * s2 - 2.0 * s) * c_b)
        der = np.where(np.abs(der) < 1e-300, 1.0, der)
        s = np.clip(s - val / der, 0.0, 1.0)
    return la + s * span


def _polyval_rows(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate per-row polynomials sum_q coeffs[:, q] x^q (Horner)."""
    out = coeffs[:, -1].copy()
    for q in range(coeffs.shape[1] - 2, -1, -1):
        out = out * x + coeffs[:, q]
    return out


def _refine_angles(lam_rows: np.ndarray, lam_node: np.ndarray) -> np.ndarray:
    """Continuous-angle maximum of the crossing radius around the best node.

    lam_rows holds the seven neighboring crossing radii (row per cell); the
    return value is the max of the degree-six interpolant, or the node value
    where the fit is unusable (missing neighbors, degenerate curvature).
    """
    usable = np.all(np.isfinite(lam_rows), axis=1)
    out = lam_node.copy()
    if not np.any(usable):
        return out
    rows = lam_rows[usable]
    coeffs = rows @ _VINV7.T
    d1 = coeffs[:, 1:] * np.arange(1, 7)
    d2 = d1[:, 1:] * np.arange(1, 6)
    a, b, c = rows[:, 2], rows[:, 3], rows[:, 4]
    den = a - 2.0 * b + c
    safe = np.abs(den) > 1e-300
    xi = np.where(safe, 0.5 * (a - c) / np.where(safe, den, 1.0), 0.0)
    xi = np.clip(xi, -0.75, 0.75)
    for _ in range(10):
        slope = _polyval_rows(d1, xi)
        curv = _polyval_rows(d2, xi)
        curv = np.where(np.abs(curv) < 1e-300, -1e-300, curv)
        xi = np.clip(xi - slope / curv, -1.25, 1.25)
    lam_ref = _polyval_rows(coeffs, xi)
    node = lam_node[usable]
    good = (np.isfinite(lam_ref)
            & (_polyval_rows(d2, xi) < 0.0)
            & (lam_ref >= node - 1e-12 * np.maximum(1.0, np.abs(node)))
            & (lam_ref - node <= rows.max(axis=1) - rows.min(axis=1) + 1e-12))
    out[usable] = np.where(good, np.maximum(lam_ref, node), node)
    return out


def reconstruct(traj: FlowTrajectory, dx: float,
                r_excl: float | None = None,
                time_interp: str = "hermite",
                fit_last: int = 12,
                pad_cells: int = 3,
                theta_refine: int = 1) -> ArrivalField:
    """Rebuild the arrival-time function of a completed flow on a grid.

    r_excl is the radius of the extinction-ball mask (default
    max(5 dx, 0.02 * initial inradius)). time_interp selects the cubic
    Hermite scheme in the model radius ("hermite", default) or plain linear
    interpolation in time ("linear", kept for comparison; it is first order
    and too rough for Hessian work). theta_refine trigonometrically
    upsamples the stored direction set by that factor before the crossing
    search; eccentric shapes carry support-spectrum content that a local
    polynomial cannot recover from the raw node spacing, and upsampling
    pushes the angular-maximum error down by (1/theta_refine)^7.
    """
    if time_interp not in ("hermite", "linear"):
        raise ConfigError(f"unknown time_interp {time_interp!r}")
    if theta_refine not in (1, 2, 4, 8):
        raise ConfigError("theta_refine must be 1, 2, 4 or 8")
    if traj.n_snapshots < 4:
        raise ConfigError("need at least four snapshots to reconstruct")
    if not np.all(np.diff(traj.h_stack, axis=0) < 0):
        raise NonMonotoneContainment(
            "stored support values must decrease strictly between snapshots")

    t_ext, p_ext = traj.extinction_estimate(fit_last=fit_last)
    alpha = traj.alpha
    initial = traj.curve(0)
    inradius0 = initial.inradius()
    if r_excl is None:
        r_excl = max(5.0 * dx, 0.02 * inradius0)

    # Snapshot data reordered so the model radius increases.
    lam_asc = ((1.0 + alpha) * (t_ext - traj.times[::-1])) \
        ** (1.0 / (1.0 + alpha))
    t_asc = traj.times[::-1]
    H_asc = traj.h_stack[::-1]
    F_asc = traj.F_stack[::-1]
    if theta_refine > 1:
        n_fine = H_asc.shape[1] * theta_refine
        scale = n_fine / H_asc.shape[1]
        H_asc = np.fft.irfft(np.fft.rfft(H_asc, axis=1), n=n_fine,
                             axis=1) * scale
        F_asc = np.fft.irfft(np.fft.rfft(F_asc, axis=1), n=n_fine,
                             axis=1) * scale
    D_asc = F_asc * lam_asc[:, None] ** alpha  # dh/dlambda
    nS = lam_asc.size
    h0 = H_asc[-1]
    n_dirs = h0.size
    ang = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    normals = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    origin = traj.origin

    pts = initial.boundary_points()
    pad = pad_cells * dx
    x0 = np.floor((pts[:, 0].min() - pad) / dx) * dx
    y0 = np.floor((pts[:, 1].min() - pad) / dx) * dx
    nx = int(np.ceil((pts[:, 0].max() + pad - x0) / dx)) + 1
    ny = int(np.ceil((pts[:, 1].max() + pad - y0) / dx)) + 1

    u = np.full((nx, ny), float(traj.t0))
    mask = np.full((nx, ny), EXTERIOR, dtype=np.uint8)
    xs = x0 + dx * np.arange(nx)
    ys = y0 + dx * np.arange(ny)

    lam_cap = lam_asc[-1]
    block = max(1, 4_194_304 // (n_dirs * ny))  # rows per chunk
    offsets = np.arange(-3, 4)

    # Support values scale with the model radius within fixed bounds,
    # h(lambda, theta) / lambda in [c1, c2] over the stored history, so a
    # direction can carry the winning (or a refinement-neighbor) crossing
    # only if its support coordinate is within c1/c2 of the largest one.
    # Everything below that threshold is skipped per cell. The extra cosine
    # factor keeps the seven-point refinement stencil inside the window on
    # coarse direction grids, where three grid angles of falloff exceed the
    # ratio slack and the refinement would silently degrade to the discrete
    # maximum (an O(dtheta^2) cliff).
    ratios = H_asc / lam_asc[:, None]
    win_factor = (0.99 * float(ratios.min()) / float(ratios.max())
                  * np.cos(3.5 * 2.0 * np.pi / n_dirs))

    for i0 in range(0, nx, block):
        i1 = min(i0 + block, nx)
        px, py = np.meshgrid(xs[i0:i1], ys, indexing="ij")
        P = np.stack([px.ravel(), py.ravel()], axis=-1)
        m = P.shape[0]
        G = (P - origin) @ normals.T  # (m, n_dirs)
        inside0 = (G - h0).max(axis=1) < -CONTAINS_TIE
        d0 = (h0 - G).min(axis=1)
        g_floor = win_factor * G.max(axis=1)

        result = np.full((m, n_dirs), np.nan)
        for j in range(n_dirs):
            sel = np.nonzero(G[:, j] >= g_floor)[0]
            if sel.size == 0:
                continue
            col = H_asc[:, j]
            g = G[sel, j]
            idx = np.searchsorted(col, g, side="right") - 1
            no_cross = idx < 0
            idx = np.clip(idx, 0, nS - 2)
            la, lb = lam_asc[idx], lam_asc[idx + 1]
            ha, hb = col[idx], col[idx + 1]
            if time_interp == "hermite":
                lam_col = _hermite_solve(g, la, lb, ha, hb,
                                         D_asc[idx, j], D_asc[idx + 1, j])
            else:
                ta, tb = t_asc[idx], t_asc[idx + 1]
                frac = np.clip((g - ha) / (hb - ha), 0.0, 1.0)
                t_col = ta + frac * (tb - ta)
                lam_col = ((1.0 + alpha) * (t_ext - t_col)) \
                    ** (1.0 / (1.0 + alpha))
            lam_col[no_cross] = np.nan
            result[sel, j] = lam_col

        crossed = ~np.all(np.isnan(result), axis=1)
        lam_best = np.full(m, np.nan)
        if np.any(crossed):
            sub = result[crossed]
            j_star = np.nanargmax(sub, axis=1)
            rows = np.arange(sub.shape[0])
            lam_node = sub[rows, j_star]
            if time_interp == "hermite":
                cols = (j_star[:, None] + offsets) % n_dirs
                lam_best[crossed] = _refine_angles(sub[rows[:, None], cols],
                                                   lam_node)
            else:
                lam_best[crossed] = lam_node

        # The refined crossing radius is the sharp containment test: the
        # node-level support test admits a thin sliver between the smooth
        # curve and its circumscribed support polygon, and cells there must
        # not enter stencils as if they carried interior arrival times.
        inside = inside0 & (~crossed | (lam_best < lam_cap))

        u_blk = np.where(
            crossed,
            t_ext - lam_best ** (1.0 + alpha) / (1.0 + alpha),
            t_ext)
        u_blk = np.where(inside, u_blk, traj.t0)

        dist_ext = np.hypot(P[:, 0] - p_ext[0], P[:, 1] - p_ext[1])
        m_blk = np.full(m, EXTERIOR, dtype=np.uint8)
        m_blk[inside] = INTERIOR
        m_blk[inside & (d0 <= 2.0 * dx)] = BOUNDARY_LAYER
        m_blk[inside & ((dist_ext <= r_excl) | ~crossed)] = EXTINCTION_BALL

        u[i0:i1] = u_blk.reshape(i1 - i0, ny)
        mask[i0:i1] = m_blk.reshape(i1 - i0, ny)

    return ArrivalField(
        u=u, mask=mask, x0=float(x0), y0=float(y0), dx=float(dx),
        t0=float(traj.t0), t_ext=float(t_ext), p_ext=np.asarray(p_ext),
        alpha=float(alpha), speed_name=traj.speed.name,
        inradius0=float(inradius0))


def synthetic_field(fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    bounds: tuple[float, float, float, float], dx: float,
                    t0: float = 0.0, t_ext: float = 1.0,
                    p_ext: tuple[float, float] = (0.0, 0.0),
                    alpha: float = 1.0,
                    speed_name: str = "synthetic") -> ArrivalField:
    """Closed-form field on a box with an all-INTERIOR mask (test helper)."""
    xmin, xmax, ymin, ymax = bounds
    nx = int(round((xmax - xmin) / dx)) + 1
    ny = int(round((ymax - ymin) / dx)) + 1
    gx, gy = np.meshgrid(xmin + dx * np.arange(nx),
                         ymin + dx * np.arange(ny), indexing="ij")
    u = np.asarray(fn(gx, gy), dtype=float)
    mask = np.full((nx, ny), INTERIOR, dtype=np.uint8)
    return ArrivalField(
        u=u, mask=mask, x0=float(xmin), y0=float(ymin), dx=float(dx),
        t0=float(t0), t_ext=float(t_ext),
        p_ext=np.asarray(p_ext, dtype=float), alpha=float(alpha),
        speed_name=speed_name, inradius0=float(min(xmax - xmin,
                                                   ymax - ymin) / 2.0))


# --------------------------------------------------------------------------
# Monotone transforms of arrival time


@dataclass(frozen=True)
class TransformedField:
    """phi(u) for a smooth increasing phi, with exact chain-rule data.

    kind "sqrt_power" is w = ((1+alpha)(u - t_ref))^(1/(1+alpha)), the
    concavity normalization; "log" is log(u - t_ref); "identity" is u - t_ref
    shifted only. phi_prime/phi_second are evaluated from u, so transformed
    derivatives are exact algebra on the u derivatives.
    """

    kind: str
    values: np.ndarray
    t_ref: float
    source: ArrivalField = dataclass_field(repr=False)

    def phi_of(self, uvals: np.ndarray) -> np.ndarray:
        diff = uvals - self.t_ref
        if self.kind == "sqrt_power":
            a = self.source.alpha
            return ((1.0 + a) * diff) ** (1.0 / (1.0 + a))
        if self.kind == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(diff)
        return diff

    def phi_derivatives(self, uvals: np.ndarray) -> tuple[np.ndarray,
                                                          np.ndarray]:
        """(phi', phi'') at the given u values."""
        diff = uvals - self.t_ref
        if self.kind == "sqrt_power":
            a = self.source.alpha
            with np.errstate(divide="ignore", invalid="ignore"):
                w = ((1.0 + a) * diff) ** (1.0 / (1.0 + a))
                p1 = w ** (-a)
                p2 = -a * w ** (-2.0 * a - 1.0)
            return p1, p2
        if self.kind == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                return 1.0 / diff, -1.0 / diff ** 2
        return np.ones_like(diff), np.zeros_like(diff)

    def value_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Transform of the bilinear arrival time (interpolate, then map)."""
        uvals, ok = self.source.value_at(points)
        return self.phi_of(uvals), ok


def transform(field: ArrivalField, kind: str,
              t_ref: float | None = None) -> TransformedField:
    """Build phi(u) on the grid; t_ref defaults to the start time t0."""
    if kind not in TRANSFORM_KINDS:
        raise ConfigError(f"unknown transform {kind!r}; "
                          f"choose one of {TRANSFORM_KINDS}")
    if t_ref is None:
        t_ref = field.t0
    if t_ref > field.t0:
        raise ConfigError("the transform reference time cannot exceed the "
                          "start time")
    diff = field.u - float(t_ref)
    if kind == "sqrt_power":
        values = ((1.0 + field.alpha) * diff) ** (1.0 / (1.0 + field.alpha))
    elif kind == "log":
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.log(diff)
        # u = t_ref on exterior cells maps to -inf; keep it out of stencils.
        values = np.where(np.isfinite(values), values, np.nan)
    else:
        values = diff
    return TransformedField(kind=kind, values=values, t_ref=float(t_ref),
                            source=field)


# --------------------------------------------------------------------------
# Derivatives and level-set identities


def u_derivatives(field: ArrivalField, order: int = 2) -> FieldDerivs:
    gx, gy = gradient(field.u, field.dx, order)
    hxx, hxy, hyy = hessian(field.u, field.dx, order)
    return FieldDerivs(gx, gy, hxx, hxy, hyy)


def transformed_derivatives(tf: TransformedField, order: int = 2,
                            method: str = "transform") -> FieldDerivs:
    """Derivatives of phi(u) on the grid.

    method "transform" (default) differentiates u and applies the chain rule
    exactly; "direct" differentiates the transformed values themselves.
    Both agree on smooth cells; near the boundary the direct route suffers
    from the square-root singularity of w, which is the reason the transform
    route exists.
    """
    if method == "direct":
        gx, gy = gradient(tf.values, tf.source.dx, order)
        hxx, hxy, hyy = hessian(tf.values, tf.source.dx, order)
        return FieldDerivs(gx, gy, hxx, hxy, hyy)
    if method != "transform":
        raise ConfigError(f"unknown derivative method {method!r}")
    du = u_derivatives(tf.source, order)
    p1, p2 = tf.phi_derivatives(tf.source.u)
    # Exterior cells hold phi-singular values (u = t0); they are masked out
    # of every verdict, so the NaNs they produce here are harmless.
    with np.errstate(invalid="ignore"):
        return FieldDerivs(
            gx=p1 * du.gx, gy=p1 * du.gy,
            hxx=p1 * du.hxx + p2 * du.gx * du.gx,
            hxy=p1 * du.hxy + p2 * du.gx * du.gy,
            hyy=p1 * du.hyy + p2 * du.gy * du.gy)


def level_set_curvature(derivs: FieldDerivs) -> tuple[np.ndarray,
                                                      np.ndarray]:
    """Curvature of the level sets from a derivative bundle.

    Returns (curvature, defined) where defined is False at degenerate
    gradients. The formula is the 2-d tangential Hessian quotient
    -(t . D2 t)/|D| with t the unit tangent of the level line, oriented so
    convex sublevel sets have positive curvature.
    """
    mag2 = derivs.gx ** 2 + derivs.gy ** 2
    mag = np.sqrt(mag2)
    defined = mag > GRADIENT_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        num = (derivs.gy ** 2 * derivs.hxx
               - 2.0 * derivs.gx * derivs.gy * derivs.hxy
               + derivs.gx ** 2 * derivs.hyy)
        kappa = -num / (mag2 * mag)
    return np.where(defined, kappa, np.nan), defined


def point_level_set_curvature(tf: TransformedField, point: np.ndarray,
                              order: int = 2,
                              method: str = "transform") -> float:
    """Level-set curvature at the node nearest to a point.

    Raises MaskedPoint off the verification set and DegenerateGradient where
    the gradient vanishes.
    """
    field = tf.source
    i = int(round((point[0] - field.x0) / field.dx))
    j = int(round((point[1] - field.y0) / field.dx))
    nx, ny = field.shape
    if not (0 <= i < nx and 0 <= j < ny):
        raise MaskedPoint(f"point {point} is outside the grid")
    if not (field.stencil_valid(order)[i, j]
            and field.mask[i, j] == INTERIOR):
        raise MaskedPoint(f"point {point} is masked for derivatives")
    derivs = transformed_derivatives(tf, order=order, method=method)
    kappa, defined = level_set_curvature(derivs)
    if not defined[i, j]:
        raise DegenerateGradient(f"gradient below {GRADIENT_FLOOR:.0e} "
                                 f"at {point}")
    return float(kappa[i, j])


@dataclass(frozen=True)
class ResidualReport:
    """Worst and mean absolute residual over the cells that carry a verdict."""

    worst: float
    mean: float
    cells: int
    skipped: int
    order: int

    @property
    def passed(self) -> bool:  # meaningful once compared to a tolerance
        return np.isfinite(self.worst)


def _speed_on_curvature(spec: SpeedSpec, kappa: np.ndarray) -> np.ndarray:
    """f(kappa)^alpha with out-of-cone values mapped to NaN, not raised."""
    out = np.full(kappa.shape, np.nan)
    ok = np.isfinite(kappa) & (kappa > CURVATURE_FLOOR)
    if np.any(ok):
        f = np.asarray(spec.fn(kappa[ok][..., None]), dtype=float)
        good = f > 0
        vals = np.full(f.shape, np.nan)
        vals[good] = f[good] ** spec.alpha
        out[ok] = vals
    return out


def level_set_residual(field: ArrivalField, speed: SpeedSpec,
                       order: int = 2,
                       exclude_radius: float | None = None,
                       return_field: bool = False):
    """How well the reconstruction solves its own level-set equation.

    The arrival time of a flow with speed F satisfies
    |Du| * f(kappa_level)^alpha = 1 with kappa_level the curvature of the
    level line through each point; the residual is the left side minus one,
    evaluated on verdict cells (optionally outside exclude_radius of the
    extinction point, where u is not twice differentiable for alpha < 1).
    """
    derivs = u_derivatives(field, order)
    kappa, defined = level_set_curvature(derivs)
    mag = np.hypot(derivs.gx, derivs.gy)
    F = _speed_on_curvature(speed, kappa)
    residual = mag * F - 1.0
    ok = field.verdict_cells(order, exclude_radius) & defined \
        & np.isfinite(residual)
    eligible = field.verdict_cells(order, exclude_radius)
    report = ResidualReport(
        worst=float(np.max(np.abs(residual[ok]))) if np.any(ok) else np.nan,
        mean=float(np.mean(np.abs(residual[ok]))) if np.any(ok) else np.nan,
        cells=int(ok.sum()), skipped=int(eligible.sum() - ok.sum()),
        order=order)
    if return_field:
        return report, np.where(ok, residual, np.nan)
    return report


def gradient_identity_residual(field: ArrivalField, traj: FlowTrajectory,
                               order: int = 2, snapshot_stride: int = 25,
                               theta_stride: int = 1,
                               exclude_radius: float | None = None,
                               curvature_gate: float | None = None
                               ) -> ResidualReport:
    """Check Du = -nu / F on the stored flow fronts.

    The gradient of the reconstruction is interpolated at boundary points of
    a subsample of snapshots and compared with the exact normal over speed;
    the error is measured relative to |Du| = 1/F. Points whose interpolation
    cell touches masked data are skipped (early fronts sit in the boundary
    layer, late fronts in the extinction ball), as are points within
    exclude_radius of the extinction point.

    curvature_gate, when set, additionally skips cells where the measured
    stiffness ratio |D2u| / |Du| exceeds it. Slow sides of eccentric curves
    keep a thin arrival-time layer pinned to the initial boundary for much
    of the flow's life; where that layer is thinner than ~gate cells the
    interpolated gradient cannot meet a relative tolerance at any fixed
    stencil order. The ratio is resolution independent, so the admitted
    region is fixed and the admitted error falls like dx^2.
    """
    derivs = u_derivatives(field, order)
    ok_grid = field.stencil_valid(order) & (field.mask == INTERIOR)
    if curvature_gate is not None:
        with np.errstate(invalid="ignore", divide="ignore"):
            stiff = np.sqrt(derivs.hxx ** 2 + 2.0 * derivs.hxy ** 2
                            + derivs.hyy ** 2)
            ratio = stiff / np.hypot(derivs.gx, derivs.gy)
        ok_grid &= np.isfinite(ratio) & (ratio <= curvature_gate)
    worst = 0.0
    total = 0.0
    count = 0
    skipped = 0
    for i in range(0, traj.n_snapshots, max(1, snapshot_stride)):
        snap = traj.snapshot(i)
        pts = snap.curve.boundary_points()[::max(1, theta_stride)]
        nu = snap.curve.normals()[::max(1, theta_stride)]
        F = snap.F[::max(1, theta_stride)]
        gx, okx = bilinear(derivs.gx, field.x0, field.y0, field.dx, pts,
                           valid=ok_grid)
        gy, oky = bilinear(derivs.gy, field.x0, field.y0, field.dx, pts,
                           valid=ok_grid)
        use = okx & oky
        if exclude_radius is not None:
            use &= np.hypot(pts[:, 0] - field.p_ext[0],
                            pts[:, 1] - field.p_ext[1]) > exclude_radius
        skipped += int((~use).sum())
        if not np.any(use):
            continue
        ex = gx[use] + nu[use, 0] / F[use]
        ey = gy[use] + nu[use, 1] / F[use]
        rel = np.hypot(ex, ey) * F[use]
        worst = max(worst, float(rel.max()))
        total += float(rel.sum())
        count += int(use.sum())
    return ResidualReport(
        worst=worst if count else np.nan,
        mean=(total / count) if count else np.nan,
        cells=count, skipped=skipped, order=order)
