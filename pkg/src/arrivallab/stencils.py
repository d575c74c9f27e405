"""Centered finite-difference stencils and validity bookkeeping on grids.

Arrays are indexed values[ix, iy] with uniform spacing dx in both directions.
Derivative arrays are computed everywhere with periodic rolls for speed; the
wrapped rim and any cell whose stencil touches unusable data must be masked
by the caller through erode(), which shrinks a validity mask by the Chebyshev
radius of the stencil (1 for second order, 2 for fourth).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

STENCIL_ORDERS = (2, 4)


def stencil_radius(order: int) -> int:
    if order not in STENCIL_ORDERS:
        raise ConfigError(f"stencil order must be one of {STENCIL_ORDERS}, "
                          f"got {order}")
    return order // 2


def _d1(values: np.ndarray, dx: float, axis: int, order: int) -> np.ndarray:
    vp1 = np.roll(values, -1, axis=axis)
    vm1 = np.roll(values, 1, axis=axis)
    if order == 2:
        return (vp1 - vm1) / (2.0 * dx)
    vp2 = np.roll(values, -2, axis=axis)
    vm2 = np.roll(values, 2, axis=axis)
    return (8.0 * (vp1 - vm1) - (vp2 - vm2)) / (12.0 * dx)


def _d2(values: np.ndarray, dx: float, axis: int, order: int) -> np.ndarray:
    vp1 = np.roll(values, -1, axis=axis)
    vm1 = np.roll(values, 1, axis=axis)
    if order == 2:
        return (vp1 - 2.0 * values + vm1) / dx ** 2
    vp2 = np.roll(values, -2, axis=axis)
    vm2 = np.roll(values, 2, axis=axis)
    return (-vp2 + 16.0 * vp1 - 30.0 * values + 16.0 * vm1 - vm2) \
        / (12.0 * dx ** 2)


def gradient(values: np.ndarray, dx: float,
             order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """(d/dx, d/dy) by centered differences of the given order."""
    stencil_radius(order)
    return _d1(values, dx, 0, order), _d1(values, dx, 1, order)


def hessian(values: np.ndarray, dx: float,
            order: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(d2/dx2, d2/dxdy, d2/dy2); the cross term is the separable product
    of the two first-derivative stencils, so its footprint is the full
    (2r+1)^2 square."""
    stencil_radius(order)
    vxx = _d2(values, dx, 0, order)
    vyy = _d2(values, dx, 1, order)
    vxy = _d1(_d1(values, dx, 0, order), dx, 1, order)
    return vxx, vxy, vyy


def erode(valid: np.ndarray, radius: int) -> np.ndarray:
    """Cells whose full Chebyshev-radius neighborhood is valid.

    Array edges erode as if padded with invalid cells, which also masks the
    rim contaminated by the periodic rolls in the stencils above.
    """
    if radius < 0:
        raise ConfigError(f"erosion radius must be >= 0, got {radius}")
    out = np.asarray(valid, dtype=bool)
    if radius == 0:
        return out.copy()
    padded = np.zeros((out.shape[0] + 2 * radius,
                       out.shape[1] + 2 * radius), dtype=bool)
    padded[radius:-radius, radius:-radius] = out
    result = np.ones_like(out)
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            result &= padded[radius + di:radius + di + out.shape[0],
                             radius + dj:radius + dj + out.shape[1]]
    return result


# Bivariate quartic basis on the 5x5 integer patch: exponent pairs with
# a + b <= 4 (15 terms), fitted by one precomputed pseudo-inverse.
_PATCH_TERMS = [(a, b) for a in range(5) for b in range(5 - a)]
_PATCH_A = np.array([t[0] for t in _PATCH_TERMS], dtype=float)
_PATCH_B = np.array([t[1] for t in _PATCH_TERMS], dtype=float)


def _patch_pinv() -> np.ndarray:
    oi, oj = np.meshgrid(np.arange(-2.0, 3.0), np.arange(-2.0, 3.0),
                         indexing="ij")
    cols = [(oi ** a * oj ** b).ravel() for a, b in _PATCH_TERMS]
    return np.linalg.pinv(np.stack(cols, axis=1))


_PATCH_PINV = _patch_pinv()


def _poly_terms(da: int, db: int) -> tuple[np.ndarray, np.ndarray,
                                           np.ndarray]:
    """Coefficient weights and exponents of the (da, db) derivative."""
    w = np.ones_like(_PATCH_A)
    ea, eb = _PATCH_A.copy(), _PATCH_B.copy()
    for _ in range(da):
        w *= ea
        ea -= 1.0
    for _ in range(db):
        w *= eb
        eb -= 1.0
    return w, np.maximum(ea, 0.0), np.maximum(eb, 0.0)


_PATCH_DERIVS = {pair: _poly_terms(*pair)
                 for pair in ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))}


def patch_fit_derivatives(values: np.ndarray, x0: float, y0: float,
                          dx: float, points: np.ndarray,
                          valid: np.ndarray | None = None
                          ) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    """Gradient and Hessian at arbitrary points via local quartic fits.

    A bivariate quartic is least-squares fitted to the 5x5 node patch
    around each point's nearest node and differentiated at the exact
    point. The fit reproduces polynomials through total degree four, one
    order beyond what second derivatives need, and unlike interpolating a
    precomputed derivative grid it adds no cell-scale interpolation error,
    which is the accuracy floor of bilinear reads off rough fields.

    Returns ((gx, gy, hxx, hxy, hyy), ok); a point whose patch leaves the
    grid or touches a node marked invalid gets ok False and NaN values.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    gi = np.round((pts[:, 0] - x0) / dx).astype(int)
    gj = np.round((pts[:, 1] - y0) / dx).astype(int)
    nx, ny = values.shape
    ok = (gi >= 2) & (gi <= nx - 3) & (gj >= 2) & (gj <= ny - 3)
    gic = np.clip(gi, 2, nx - 3)
    gjc = np.clip(gj, 2, ny - 3)
    oi, oj = np.meshgrid(np.arange(-2, 3), np.arange(-2, 3), indexing="ij")
    ii = gic[:, None] + oi.ravel()[None, :]
    jj = gjc[:, None] + oj.ravel()[None, :]
    patches = values[ii, jj]
    if valid is not None:
        ok &= np.all(valid[ii, jj], axis=1)
    ok &= np.all(np.isfinite(patches), axis=1)
    coef = patches @ _PATCH_PINV.T
    xi = (pts[:, 0] - (x0 + gic * dx)) / dx
    eta = (pts[:, 1] - (y0 + gjc * dx)) / dx
    out = []
    for (da, db), (w, ea, eb) in _PATCH_DERIVS.items():
        term = coef * w * xi[:, None] ** ea * eta[:, None] ** eb
        out.append(np.where(ok, term.sum(axis=1) / dx ** (da + db), np.nan))
    return tuple(out), ok


def bilinear(values: np.ndarray, x0: float, y0: float, dx: float,
             points: np.ndarray,
             valid: np.ndarray | None = None,
             valid_cells: np.ndarray | None = None) -> tuple[np.ndarray,
                                                             np.ndarray]:
    """Bilinear interpolation at points (..., 2) on the node grid.

    Returns (interpolated, ok); ok is False wherever the enclosing cell
    leaves the grid, touches a corner marked invalid in valid (node
    shaped), or is itself marked invalid in valid_cells (one smaller per
    axis). Invalid results are NaN.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    fx = (flat[:, 0] - x0) / dx
    fy = (flat[:, 1] - y0) / dx
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    nx, ny = values.shape
    ok = (ix >= 0) & (ix <= nx - 2) & (iy >= 0) & (iy <= ny - 2)
    ixc = np.clip(ix, 0, nx - 2)
    iyc = np.clip(iy, 0, ny - 2)
    tx = fx - ixc
    ty = fy - iyc
    v00 = values[ixc, iyc]
    v10 = values[ixc + 1, iyc]
    v01 = values[ixc, iyc + 1]
    v11 = values[ixc + 1, iyc + 1]
    if valid is not None:
        ok &= (valid[ixc, iyc] & valid[ixc + 1, iyc]
               & valid[ixc, iyc + 1] & valid[ixc + 1, iyc + 1])
    if valid_cells is not None:
        ok &= valid_cells[ixc, iyc]
    out = ((1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10
           + (1 - tx) * ty * v01 + tx * ty * v11)
    out = np.where(ok, out, np.nan)
    return out.reshape(pts.shape[:-1]), ok.reshape(pts.shape[:-1])
