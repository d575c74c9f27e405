"""Concavity verification for transformed arrival-time fields.

Two independent routes: a spectral test on the finite-difference Hessian
(largest eigenvalue over the verification cells) and a direct search over
Korevaar's concavity function

    Z(r, x, y) = v(r x + (1 - r) y) - r v(x) - (1 - r) v(y),

which is nonnegative exactly when v is concave on its domain.  The two
must agree for every shipped scenario; they share no derivative code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .arrival import (BOUNDARY_LAYER, ArrivalField, TransformedField,
                      transformed_derivatives)
from .errors import ConfigError, MaskedPoint
from .stencils import bilinear, gradient, hessian


def _eigmax_2x2(hxx: np.ndarray, hxy: np.ndarray,
                hyy: np.ndarray) -> np.ndarray:
    # Full-grid inputs carry NaN on masked cells; callers select valid
    # cells afterwards, so the propagation is silent by design.
    with np.errstate(invalid="ignore"):
        mid = 0.5 * (hxx + hyy)
        rad = np.sqrt((0.5 * (hxx - hyy)) ** 2 + hxy ** 2)
        return mid + rad


@dataclass(frozen=True)
class ConcavityReport:
    """Outcome of one concavity check.

    worst_value is min Z for the search method and the max Hessian
    eigenvalue for the derivative methods; the sign conventions differ,
    so `passed` is the only place a verdict is taken.  refinement_trend
    may be filled by a convergence driver with (resolution, worst_value)
    pairs from repeated runs.  domain_fraction is the share of
    interpolable cells the check actually admitted; verdicts only speak
    for that region.
    """

    method: str
    worst_value: float
    tolerance: float
    witness: dict[str, Any]
    samples: int = 0
    refinement_trend: tuple[tuple[float, float], ...] = ()
    domain_fraction: float = 1.0

    @property
    def passed(self) -> bool:
        if self.method == "korevaar_z":
            return self.worst_value >= -self.tolerance
        return self.worst_value <= self.tolerance

    def with_trend(self, trend) -> "ConcavityReport":
        return replace(self, refinement_trend=tuple(
            (float(r), float(v)) for r, v in trend))

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "worst_value": self.worst_value,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "witness": self.witness,
            "samples": self.samples,
            "refinement_trend": [list(p) for p in self.refinement_trend],
            "domain_fraction": self.domain_fraction,
        }


def hessian_concavity(tf: TransformedField, tol: float = 1e-3,
                      order: int = 2, method: str = "transform",
                      exclude_radius: float | None = None,
                      skip_early: float = 0.0) -> ConcavityReport:
    """Largest Hessian eigenvalue of the transformed field.

    The eigenvalue field is evaluated in closed form from the three
    second-derivative grids and maximized over the verification cells;
    the witness records the offending cell. PASS means max <= tol.
    skip_early excludes the startup band swept within that fraction of
    the flow's life (see ArrivalField.verdict_cells); the Korevaar search
    is the route that certifies concavity there.
    """
    d = transformed_derivatives(tf, order=order, method=method)
    lam = _eigmax_2x2(d.hxx, d.hxy, d.hyy)
    ok = tf.source.verdict_cells(order=order, exclude_radius=exclude_radius,
                                 skip_early=skip_early)
    if not np.any(ok):
        raise ConfigError("no verification cells survive the masks")
    masked = np.where(ok, lam, -np.inf)
    flat = int(np.argmax(masked))
    i, j = np.unravel_index(flat, lam.shape)
    src = tf.source
    witness = {
        "cell": (int(i), int(j)),
        "point": (float(src.x0 + i * src.dx), float(src.y0 + j * src.dx)),
        "value": float(lam[i, j]),
    }
    return ConcavityReport(
        method="hessian", worst_value=float(lam[i, j]), tolerance=float(tol),
        witness=witness, samples=int(ok.sum()))


# --------------------------------------------------------------------------
# Korevaar Z search


@dataclass(frozen=True)
class ZSearchOptions:
    """Sampling plan for the concavity-function search.

    triples seeded candidates; the refine_top best are polished by pattern
    search (coordinate descent with shrinking steps), which is deterministic
    given the seed. tol is the PASS threshold on min Z.

    local_fraction of the candidates place the endpoints a few grid cells
    apart. On a concave field the only violations left are the cell-scale
    kinks of the bilinear interpolant, and endpoints drawn independently
    from the whole box almost never straddle a single cell.

    skip_early rejects triples touching cells swept within that fraction
    of the flow's life. The concavity transforms have unbounded slope at
    the start time, so composing them with bilinear arrival times loses
    accuracy in the first swept collar; the cut keeps the search on cells
    where the composed interpolant is second-order accurate.

    curvature_gate, when set, admits only cells whose measured cross
    second difference satisfies |c_xy| / dx^2 * max(phi') <= gate. The
    bilinear interpolant of a concave field is itself non-concave by
    c_xy / 4 inside each cell, so cells above the gate cannot certify
    concavity at this resolution no matter how exact their values are.
    The gate is a fixed physical bound, so the admitted region is
    resolution independent and the admitted floor shrinks like dx^2.
    """

    triples: int = 100_000
    refine_top: int = 16
    refine_rounds: int = 60
    seed: int = 0
    tol: float = 1e-4
    local_fraction: float = 0.5
    skip_early: float = 0.0
    curvature_gate: float | None = None

    def __post_init__(self):
        if self.triples < 1:
            raise ConfigError("triples must be positive")
        if self.refine_top < 1 or self.refine_rounds < 0:
            raise ConfigError("refinement plan must be nonempty")
        if not 0.0 <= self.local_fraction <= 1.0:
            raise ConfigError("local_fraction must lie in [0, 1]")
        if not 0.0 <= self.skip_early < 1.0:
            raise ConfigError("skip_early must lie in [0, 1)")
        if self.curvature_gate is not None and self.curvature_gate <= 0.0:
            raise ConfigError("curvature_gate must be positive")


def _z_domain(tf: TransformedField, options: ZSearchOptions
              ) -> tuple[np.ndarray, np.ndarray | None, float]:
    """Node and cell validity for the search, with the admitted fraction.

    Nodes reject the first swept collar outright: the arrival-time
    gradient there is the reciprocal of the slowest initial speed, and a
    bilinear patch across such cells misplaces the level sets by a cell's
    worth of that gradient. Cells are then screened by the curvature
    gate when one is configured.
    """
    src = tf.source
    nodes = src.value_valid() & (src.mask != BOUNDARY_LAYER)
    corner_ok = (nodes[:-1, :-1] & nodes[1:, :-1]
                 & nodes[:-1, 1:] & nodes[1:, 1:])
    if options.curvature_gate is None:
        frac = 1.0 if corner_ok.any() else 0.0
        return nodes, None, frac
    c_xy = (src.u[:-1, :-1] + src.u[1:, 1:]
            - src.u[:-1, 1:] - src.u[1:, :-1])
    p1, _ = tf.phi_derivatives(src.u)
    with np.errstate(invalid="ignore"):
        slope = np.fmax(np.fmax(p1[:-1, :-1], p1[1:, 1:]),
                        np.fmax(p1[:-1, 1:], p1[1:, :-1]))
        cells = (np.abs(c_xy) / src.dx ** 2 * slope
                 <= options.curvature_gate)
    cells &= corner_ok
    total = int(corner_ok.sum())
    frac = float(cells.sum()) / total if total else 0.0
    return nodes, cells, frac


def _z_values(tf: TransformedField, r: np.ndarray, x: np.ndarray,
              y: np.ndarray, skip_early: float,
              nodes: np.ndarray, cells: np.ndarray | None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Z and a joint validity flag for batched triples."""
    src = tf.source
    mid = r[:, None] * x + (1.0 - r[:, None]) * y
    ux, okx = bilinear(src.u, src.x0, src.y0, src.dx, x,
                       valid=nodes, valid_cells=cells)
    uy, oky = bilinear(src.u, src.x0, src.y0, src.dx, y,
                       valid=nodes, valid_cells=cells)
    um, okm = bilinear(src.u, src.x0, src.y0, src.dx, mid,
                       valid=nodes, valid_cells=cells)
    ok = okx & oky & okm
    if skip_early > 0.0:
        lo = src.t0 + skip_early * (src.t_ext - src.t0)
        ok &= (ux > lo) & (uy > lo) & (um > lo)
    # Single subtraction keeps Z(r, x, y) == Z(1 - r, y, x) bitwise.
    with np.errstate(invalid="ignore", divide="ignore"):
        z = tf.phi_of(um) - (r * tf.phi_of(ux) + (1.0 - r) * tf.phi_of(uy))
    return z, ok


def korevaar_z(tf: TransformedField, r: float, x, y,
               options: ZSearchOptions | None = None) -> float:
    """Z at a single triple, under the same domain rules as the search.

    Raises MaskedPoint when any of the three evaluation points lacks valid
    bilinear data under the given options.
    """
    if options is None:
        options = ZSearchOptions()
    if not 0.0 <= r <= 1.0:
        raise ConfigError(f"the convex weight r must lie in [0, 1], got {r}")
    nodes, cells, _ = _z_domain(tf, options)
    rs = np.array([float(r)])
    xs = np.asarray(x, dtype=float).reshape(1, 2)
    ys = np.asarray(y, dtype=float).reshape(1, 2)
    z, ok = _z_values(tf, rs, xs, ys, options.skip_early, nodes, cells)
    if not ok[0]:
        raise MaskedPoint(f"triple (r={r}, x={tuple(xs[0])}, "
                          f"y={tuple(ys[0])}) touches excluded cells")
    return float(z[0])


def _interpolable_box(field: ArrivalField) -> tuple[float, float,
                                                    float, float]:
    ok = field.value_valid()
    ii, jj = np.nonzero(ok)
    xs, ys = field.xs(), field.ys()
    return (float(xs[ii.min()]), float(xs[ii.max()]),
            float(ys[jj.min()]), float(ys[jj.max()]))


def korevaar_z_search(tf: TransformedField,
                      options: ZSearchOptions | None = None
                      ) -> ConcavityReport:
    """Minimize Z over random triples, then refine the best candidates.

    Candidate endpoints are drawn from the bounding box of the interpolable
    cells, partly as independent pairs and partly as pairs a few cells
    apart, and rejected unless all three evaluation points carry valid
    bilinear data; the reduction to the minimum is index-ordered, so a
    fixed seed reproduces the report bit for bit.
    """
    if options is None:
        options = ZSearchOptions()
    rng = np.random.default_rng(options.seed)
    lo_x, hi_x, lo_y, hi_y = _interpolable_box(tf.source)
    dx = tf.source.dx
    nodes, cells, domain_fraction = _z_domain(tf, options)

    want = options.triples
    rs = np.empty(want)
    xs = np.empty((want, 2))
    ys = np.empty((want, 2))
    got = 0
    for _ in range(200):
        if got >= want:
            break
        k = want - got
        r = rng.uniform(0.0, 1.0, size=k)
        x = np.stack([rng.uniform(lo_x, hi_x, k),
                      rng.uniform(lo_y, hi_y, k)], axis=-1)
        y = np.stack([rng.uniform(lo_x, hi_x, k),
                      rng.uniform(lo_y, hi_y, k)], axis=-1)
        local = rng.uniform(0.0, 1.0, k) < options.local_fraction
        radius = dx * rng.uniform(0.25, 4.0, k)
        psi = rng.uniform(0.0, 2.0 * np.pi, k)
        y_near = x + (radius * np.stack([np.cos(psi), np.sin(psi)])).T
        y = np.where(local[:, None], y_near, y)
        _, ok = _z_values(tf, r, x, y, options.skip_early, nodes, cells)
        n_ok = int(ok.sum())
        rs[got:got + n_ok] = r[ok]
        xs[got:got + n_ok] = x[ok]
        ys[got:got + n_ok] = y[ok]
        got += n_ok
    if got < want:
        raise ConfigError("could not draw enough interpolable triples; "
                          "the valid region is too small")

    z, _ = _z_values(tf, rs, xs, ys, options.skip_early, nodes, cells)
    top = min(options.refine_top, want)
    cand = np.argpartition(z, top - 1)[:top]
    cand = cand[np.argsort(z[cand], kind="stable")]

    r_c = rs[cand].copy()
    x_c = xs[cand].copy()
    y_c = ys[cand].copy()
    z_c = z[cand].copy()

    # Pattern search over the five coordinates (r, x, y); steps start wide
    # enough to traverse the domain and halve on rounds without progress.
    step_r = np.full(top, 0.25)
    step_s = np.full(top, 0.1 * max(hi_x - lo_x, hi_y - lo_y))
    for _ in range(options.refine_rounds):
        improved = np.zeros(top, dtype=bool)
        for dim in range(5):
            for sign in (1.0, -1.0):
                r_t = r_c.copy()
                x_t = x_c.copy()
                y_t = y_c.copy()
                if dim == 0:
                    r_t = np.clip(r_c + sign * step_r, 0.0, 1.0)
                elif dim == 1:
                    x_t[:, 0] = np.clip(x_c[:, 0] + sign * step_s, lo_x, hi_x)
                elif dim == 2:
                    x_t[:, 1] = np.clip(x_c[:, 1] + sign * step_s, lo_y, hi_y)
                elif dim == 3:
                    y_t[:, 0] = np.clip(y_c[:, 0] + sign * step_s, lo_x, hi_x)
                else:
                    y_t[:, 1] = np.clip(y_c[:, 1] + sign * step_s, lo_y, hi_y)
                z_t, ok_t = _z_values(tf, r_t, x_t, y_t, options.skip_early,
                                      nodes, cells)
                take = ok_t & (z_t < z_c)
                r_c = np.where(take, r_t, r_c)
                x_c = np.where(take[:, None], x_t, x_c)
                y_c = np.where(take[:, None], y_t, y_c)
                z_c = np.where(take, z_t, z_c)
                improved |= take
        step_r = np.where(improved, step_r, 0.5 * step_r)
        step_s = np.where(improved, step_s, 0.5 * step_s)

    best = int(np.argmin(z_c))
    witness = {
        "r": float(r_c[best]),
        "x": (float(x_c[best, 0]), float(x_c[best, 1])),
        "y": (float(y_c[best, 0]), float(y_c[best, 1])),
        "z": float(z_c[best]),
    }
    return ConcavityReport(
        method="korevaar_z", worst_value=float(z_c[best]),
        tolerance=float(options.tol), witness=witness, samples=want,
        domain_fraction=domain_fraction)


# --------------------------------------------------------------------------
# Finite-reference ancient proxy


def ancient_proxy_check(field: ArrivalField, t_ref: float,
                        tol: float = 1e-3, order: int = 2,
                        exclude_radius: float | None = None,
                        skip_early: float = 0.0) -> ConcavityReport:
    """Max eigenvalue of D2u - c Du (x) Du / (u - t_ref), c = a/(1+a).

    This is the inequality the concavity theorem yields when the flow is
    restarted from reference time t_ref <= t0; pushing t_ref toward
    -infinity weakens the subtracted rank-one term, so margins must grow
    (weakly) as t_ref decreases.  PASS means max eigenvalue <= tol.
    """
    if t_ref > field.t0:
        raise ConfigError("t_ref must not exceed the flow start time")
    c = field.alpha / (1.0 + field.alpha)
    gx, gy = gradient(field.u, field.dx, order)
    hxx, hxy, hyy = hessian(field.u, field.dx, order)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = field.u - t_ref
        lam = _eigmax_2x2(hxx - c * gx * gx / denom,
                          hxy - c * gx * gy / denom,
                          hyy - c * gy * gy / denom)
    ok = field.verdict_cells(order=order, exclude_radius=exclude_radius,
                             skip_early=skip_early)
    if not np.any(ok):
        raise ConfigError("no verification cells survive the masks")
    masked = np.where(ok, lam, -np.inf)
    i, j = np.unravel_index(int(np.argmax(masked)), lam.shape)
    witness = {
        "cell": (int(i), int(j)),
        "point": (float(field.x0 + i * field.dx),
                  float(field.y0 + j * field.dx)),
        "value": float(lam[i, j]),
        "t_ref": float(t_ref),
    }
    return ConcavityReport(
        method="ancient_proxy", worst_value=float(lam[i, j]),
        tolerance=float(tol), witness=witness, samples=int(ok.sum()))
