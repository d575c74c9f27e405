"""Differential Harnack quantities of a flow and their arrival-time twin.

For a speed F = f(kappa)^alpha, the Harnack quantity at a boundary point of
the time-t curve is

    Q = dtF - F_s^2 / kappa + alpha F / ((1 + alpha)(t - t0)),

where dtF is the speed's time derivative under purely normal motion and F_s
its arclength derivative. Q is the minimum over tangential velocities v of
the quadratic q(v) = dtF + 2 v F_s + kappa v^2 + time term, attained at
v = -F_s / kappa; dropping the time term gives the ancient version (the
limit t0 -> -infinity). Flows of convex curves started at t0 keep Q >= 0.

The same quantity governs concavity of the transformed arrival time
w = ((1+alpha)(u - t0))^(1/(1+alpha)). On the boundary, in the frame (unit
tangent, outward normal), the Hessian of w assembles exactly from flow data:

    D2w = w^(-alpha) [[ -kappa / F,  F_s / F^2                           ],
                      [  F_s / F^2,  -(dtF + alpha F / w^(1+alpha)) / F^3]]

with w^(1+alpha) = (1+alpha)(t - t0) on the time-t curve, so no
reconstructed grid enters. Both diagonal entries are negative outright, so
negative semidefiniteness reduces to the determinant condition, which
expands to exactly Q >= 0. equivalence_check compares this assembly
against finite differences of w on the reconstructed arrival-time grid, a
route that shares none of the flow fields, and requires the two verdicts to
agree in sign.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrival import ArrivalField, transform, u_derivatives
from .differentiation import theta_grid
from .errors import ConfigError, MaskedPoint
from .flow import FlowSnapshot, FlowTrajectory
from .stencils import patch_fit_derivatives

MODES = ("flow", "ancient")


def _time_term(snap: FlowSnapshot, alpha: float, t0: float,
               mode: str) -> np.ndarray:
    if mode not in MODES:
        raise ConfigError(f"unknown Harnack mode {mode!r}; "
                          f"choose one of {MODES}")
    if mode == "ancient":
        return np.zeros_like(snap.F)
    if not snap.t - t0 > 0.0:
        raise ConfigError(f"the time term needs t > t0, got t = {snap.t} "
                          f"with t0 = {t0}")
    return alpha * snap.F / ((1.0 + alpha) * (snap.t - t0))


def harnack_values(snap: FlowSnapshot, alpha: float, t0: float = 0.0,
                   mode: str = "flow") -> np.ndarray:
    """The Harnack quantity Q at every direction of one snapshot."""
    return snap.dtF - snap.F_s ** 2 / snap.kappa + _time_term(
        snap, alpha, t0, mode)


def direction_quadratic(snap: FlowSnapshot, alpha: float,
                        v: float | np.ndarray, t0: float = 0.0,
                        mode: str = "flow") -> np.ndarray:
    """q(v) = dtF + 2 v F_s + kappa v^2 + time term, per direction.

    Q = min over v of q(v), so sampling tangential velocities and comparing
    against harnack_values checks the closed-form minimization
    independently. v broadcasts against the direction grid.
    """
    v = np.asarray(v, dtype=float)
    return (snap.dtF + 2.0 * v * snap.F_s + snap.kappa * v ** 2
            + _time_term(snap, alpha, t0, mode))


@dataclass(frozen=True)
class HarnackReport:
    """Minima of Q over a trajectory, with the witness of the global one."""

    mode: str
    alpha: float
    t0: float
    skip_rel: float
    times: np.ndarray
    minima: np.ndarray
    q_stack: np.ndarray
    min_value: float
    witness_t: float
    witness_theta: float
    n_skipped: int

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "alpha": self.alpha, "t0": self.t0,
            "skip_rel": self.skip_rel,
            "min_value": self.min_value, "witness_t": self.witness_t,
            "witness_theta": self.witness_theta,
            "n_evaluated": int(self.times.size),
            "n_skipped": self.n_skipped,
            "snapshot_times": self.times.tolist(),
            "snapshot_minima": self.minima.tolist(),
        }

    def save(self, directory: str | Path, stride: int = 1) -> None:
        """Write harnack.json and a (t, theta, Q) table as harnack.csv.

        stride thins the CSV rows by snapshot (first and last always kept);
        the JSON keeps every evaluated snapshot's minimum regardless.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "harnack.json").write_text(
            json.dumps(self.to_dict(), indent=2))
        idx = list(range(0, self.times.size, max(1, int(stride))))
        if idx and idx[-1] != self.times.size - 1:
            idx.append(self.times.size - 1)
        thetas = theta_grid(self.q_stack.shape[1])
        with open(directory / "harnack.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "theta", "Q"])
            for i in idx:
                for j in range(thetas.size):
                    writer.writerow([repr(float(self.times[i])),
                                     repr(float(thetas[j])),
                                     repr(float(self.q_stack[i, j]))])


def trajectory_harnack(traj: FlowTrajectory, t0: float | None = None,
                       mode: str = "flow",
                       skip_rel: float = 1e-3) -> HarnackReport:
    """Evaluate Q on every stored snapshot of a trajectory.

    t0 defaults to the trajectory's start time. Snapshots with
    t - t0 <= skip_rel * (t_ext - t0) are dropped: the time term diverges as
    t -> t0+, and the first stored slice sits at t0 itself, so the quantity
    is +inf there and carries no information either way.
    """
    if t0 is None:
        t0 = traj.t0
    if t0 > traj.t0:
        raise ConfigError(f"t0 = {t0} exceeds the trajectory start time "
                          f"{traj.t0}")
    t_ext, _ = traj.extinction_estimate()
    cut = t0 + skip_rel * (t_ext - t0)
    keep = [i for i in range(traj.n_snapshots) if traj.times[i] > cut]
    if not keep:
        raise ConfigError("every snapshot fell inside the skip window")
    times = np.array([traj.times[i] for i in keep])
    q_stack = np.array([harnack_values(traj.snapshot(i), traj.alpha, t0,
                                       mode) for i in keep])
    minima = q_stack.min(axis=1)
    flat = int(np.argmin(q_stack))
    i_w, j_w = divmod(flat, q_stack.shape[1])
    thetas = theta_grid(q_stack.shape[1])
    return HarnackReport(
        mode=mode, alpha=traj.alpha, t0=float(t0), skip_rel=float(skip_rel),
        times=times, minima=minima, q_stack=q_stack,
        min_value=float(q_stack[i_w, j_w]), witness_t=float(times[i_w]),
        witness_theta=float(thetas[j_w]),
        n_skipped=traj.n_snapshots - len(keep))


@dataclass(frozen=True)
class MonotonicityReport:
    """Global Q minima for a decreasing sequence of reference times."""

    t0_values: np.ndarray
    minima: np.ndarray
    monotone: bool

    def to_dict(self) -> dict:
        return {"t0_values": self.t0_values.tolist(),
                "minima": self.minima.tolist(), "monotone": self.monotone}


def time_term_monotonicity(traj: FlowTrajectory, t0_list,
                           skip_rel: float = 1e-3) -> MonotonicityReport:
    """Min-Q as the reference time t0 walks backward.

    The time term alpha F / ((1+alpha)(t - t0)) shrinks pointwise as t0
    decreases, so the minima must be nonincreasing along the sorted list.
    Every t0 is evaluated on the skip window of the largest one, keeping the
    minima comparable; a violation flags an implementation bug, not a
    geometric discovery.
    """
    t0s = np.sort(np.asarray(t0_list, dtype=float))[::-1]
    if t0s.size < 2:
        raise ConfigError("need at least two reference times to compare")
    if t0s[0] > traj.t0:
        raise ConfigError(f"t0 = {t0s[0]} exceeds the trajectory start "
                          f"time {traj.t0}")
    t_ext, _ = traj.extinction_estimate()
    cut = t0s[0] + skip_rel * (t_ext - t0s[0])
    keep = [i for i in range(traj.n_snapshots) if traj.times[i] > cut]
    if not keep:
        raise ConfigError("every snapshot fell inside the skip window")
    minima = np.empty(t0s.size)
    for k, t0 in enumerate(t0s):
        minima[k] = min(harnack_values(traj.snapshot(i), traj.alpha,
                                       float(t0), "flow").min()
                        for i in keep)
    monotone = bool(np.all(np.diff(minima) <= 1e-12))
    return MonotonicityReport(t0_values=t0s, minima=minima,
                              monotone=monotone)


# --------------------------------------------------------------------------
# Cross-check against the reconstructed arrival time


def boundary_hessian(snap: FlowSnapshot, alpha: float,
                     t0: float = 0.0) -> np.ndarray:
    """Hessian of w on the boundary, assembled from flow data alone.

    Returns an (n, 2, 2) stack, one matrix per direction, expressed in the
    orthonormal frame (unit tangent, outward normal) at that direction. The
    power w^(1+alpha) equals (1+alpha)(t - t0) exactly on the time-t curve,
    so the assembly never touches a reconstructed arrival-time grid.
    """
    power = (1.0 + alpha) * (snap.t - t0)
    if not power > 0.0:
        raise ConfigError(f"need t > t0 to place the curve on a level of w,"
                          f" got t = {snap.t} with t0 = {t0}")
    w = power ** (1.0 / (1.0 + alpha))
    pref = w ** (-alpha)
    m11 = pref * (-snap.kappa / snap.F)
    m12 = pref * (snap.F_s / snap.F ** 2)
    m22 = pref * (-(snap.dtF + alpha * snap.F / power) / snap.F ** 3)
    out = np.empty((snap.F.size, 2, 2))
    out[:, 0, 0] = m11
    out[:, 0, 1] = m12
    out[:, 1, 0] = m12
    out[:, 1, 1] = m22
    return out


def _eigmax_sym(mats: np.ndarray) -> np.ndarray:
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 1]
    half = 0.5 * (a + c)
    return half + np.sqrt((0.5 * (a - c)) ** 2 + b ** 2)


@dataclass(frozen=True)
class CrossSample:
    """One boundary point's intrinsic and extrinsic Hessians of w."""

    t: float
    theta: float
    point: np.ndarray
    intrinsic: np.ndarray
    extrinsic: np.ndarray
    rel_gap: float


@dataclass(frozen=True)
class CrossCheckReport:
    """Agreement of the two Hessian-of-w routes over sampled points."""

    samples_used: int
    samples_skipped: int
    max_rel_gap: float
    mean_rel_gap: float
    worst: CrossSample
    intrinsic_worst_eig: float
    extrinsic_worst_eig: float
    signs_agree: bool
    sign_tol: float
    stiffness_gate: float | None

    def to_dict(self) -> dict:
        return {
            "samples_used": self.samples_used,
            "samples_skipped": self.samples_skipped,
            "max_rel_gap": self.max_rel_gap,
            "mean_rel_gap": self.mean_rel_gap,
            "worst_t": self.worst.t, "worst_theta": self.worst.theta,
            "intrinsic_worst_eig": self.intrinsic_worst_eig,
            "extrinsic_worst_eig": self.extrinsic_worst_eig,
            "signs_agree": self.signs_agree, "sign_tol": self.sign_tol,
            "stiffness_gate": self.stiffness_gate,
        }


def _check_pairing(traj: FlowTrajectory, field: ArrivalField) -> None:
    if abs(field.t0 - traj.t0) > 1e-12:
        raise ConfigError(f"field start time {field.t0} does not match the "
                          f"trajectory's {traj.t0}")
    if abs(field.alpha - traj.alpha) > 1e-12:
        raise ConfigError(f"field alpha {field.alpha} does not match the "
                          f"trajectory's {traj.alpha}")


def _trusted_nodes(field: ArrivalField, exclude_radius: float | None,
                   skip_early: float,
                   stiffness_gate: float | None) -> np.ndarray:
    """Nodes whose 5x5 patches may feed the extrinsic fit.

    Besides the usual verification mask, a stiffness gate drops nodes where
    the arrival time's measured ratio |D2u| / |Du| exceeds the gate: slow
    sides of eccentric curves keep a layer pinned near the initial boundary
    whose feature width is a fixed number of cells at any resolution, and
    no fixed-size fit is accurate across it. The ratio is resolution
    independent, so the admitted set converges under refinement.
    """
    ok = field.verdict_cells(order=2, exclude_radius=exclude_radius,
                             skip_early=skip_early)
    if stiffness_gate is not None:
        du = u_derivatives(field, order=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            stiff = np.sqrt(du.hxx ** 2 + 2.0 * du.hxy ** 2 + du.hyy ** 2)
            ratio = stiff / np.hypot(du.gx, du.gy)
        ok &= np.isfinite(ratio) & (ratio <= stiffness_gate)
    return ok


def _extrinsic_samples(snap: FlowSnapshot, js: np.ndarray,
                       w_values: np.ndarray, field: ArrivalField,
                       valid: np.ndarray):
    """Fitted Hessian of w at boundary nodes js, in the curve's frame.

    Returns (pts, mats, ok): mats has shape (len(js), 2, 2) expressed in
    the (tangent, normal) frame; ok flags samples whose whole fit patch
    consists of trusted nodes.
    """
    pts = snap.curve.boundary_points()[js]
    (_, _, exx, exy, eyy), ok = patch_fit_derivatives(
        w_values, field.x0, field.y0, field.dx, pts, valid=valid)
    tan = snap.curve.tangents()[js]
    nor = snap.curve.normals()[js]
    # Conjugate into the frame: entries v^T E u for v, u in {tangent, normal}.
    def quad(v, u):
        return (v[:, 0] * exx * u[:, 0] + v[:, 0] * exy * u[:, 1]
                + v[:, 1] * exy * u[:, 0] + v[:, 1] * eyy * u[:, 1])
    mats = np.empty((js.size, 2, 2))
    mats[:, 0, 0] = quad(tan, tan)
    mats[:, 0, 1] = quad(tan, nor)
    mats[:, 1, 0] = mats[:, 0, 1]
    mats[:, 1, 1] = quad(nor, nor)
    return pts, mats, ok


def cross_check_at(traj: FlowTrajectory, field: ArrivalField, i_snap: int,
                   j_node: int, exclude_radius: float | None = 0.1,
                   skip_early: float = 0.1,
                   stiffness_gate: float | None = 12.0) -> CrossSample:
    """Both Hessian routes at one boundary node of one snapshot.

    Raises MaskedPoint when the node's fit patch reaches cells excluded
    from derivative verification (exterior stencil, extinction disk,
    startup band, stiffness gate, or off the grid).
    """
    _check_pairing(traj, field)
    tf = transform(field, "sqrt_power")
    valid = _trusted_nodes(field, exclude_radius, skip_early, stiffness_gate)
    snap = traj.snapshot(i_snap)
    js = np.array([int(j_node) % snap.F.size])
    pts, mats, ok = _extrinsic_samples(snap, js, tf.values, field, valid)
    if not ok[0]:
        raise MaskedPoint(f"boundary point {pts[0]} of snapshot {i_snap} "
                          f"lies on cells excluded from verification")
    intr = boundary_hessian(snap, traj.alpha, traj.t0)[js[0]]
    gap = float(np.linalg.norm(mats[0] - intr)
                / max(np.linalg.norm(intr), 1e-300))
    thetas = theta_grid(snap.F.size)
    return CrossSample(t=snap.t, theta=float(thetas[js[0]]), point=pts[0],
                       intrinsic=intr, extrinsic=mats[0], rel_gap=gap)


def equivalence_check(traj: FlowTrajectory, field: ArrivalField,
                      samples: int = 512,
                      exclude_radius: float | None = 0.1,
                      skip_early: float = 0.1,
                      stiffness_gate: float | None = 12.0,
                      sign_tol: float = 1e-3) -> CrossCheckReport:
    """Compare the two Hessian-of-w routes over a deterministic sample set.

    Snapshots are spread evenly over the trusted time window (after the
    startup fraction skip_early of the flow's life, while the curve still
    leaves the extinction disk of radius exclude_radius), and directions
    rotate from snapshot to snapshot so the samples tile the space-time
    boundary. The extrinsic route fits a local polynomial patch to the
    transformed grid at each boundary point; points whose patch reaches
    excluded cells are counted, not used. The discrepancy is the Frobenius
    gap relative to the intrinsic matrix. signs_agree records whether the
    worst eigenvalues of the two routes sit on the same side of zero
    within sign_tol.
    """
    _check_pairing(traj, field)
    if samples < 4:
        raise ConfigError("need at least four samples")
    tf = transform(field, "sqrt_power")
    valid = _trusted_nodes(field, exclude_radius, skip_early, stiffness_gate)

    t0, t_ext = field.t0, field.t_ext
    lo = t0 + skip_early * (t_ext - t0)
    ok_t = traj.times > lo
    if exclude_radius is not None:
        ok_t &= traj.witness_radius() > exclude_radius
    window = np.flatnonzero(ok_t)
    if window.size == 0:
        raise ConfigError("no snapshot falls inside the trusted window")
    n_dir = traj.h_stack.shape[1]
    per = max(4, int(round(np.sqrt(samples))))
    rows = min(window.size, max(1, samples // per))
    snaps = window[np.unique(np.linspace(0, window.size - 1,
                                         rows).round().astype(int))]

    used_gap, used_eint, used_eext = [], [], []
    skipped = 0
    worst: CrossSample | None = None
    thetas = theta_grid(n_dir)
    for k, i in enumerate(snaps):
        snap = traj.snapshot(int(i))
        js = (np.arange(per) * n_dir // per
              + k * n_dir // max(1, per * len(snaps))) % n_dir
        pts, mats, ok = _extrinsic_samples(snap, js, tf.values, field, valid)
        intr = boundary_hessian(snap, traj.alpha, t0)[js]
        skipped += int(np.count_nonzero(~ok))
        if not np.any(ok):
            continue
        norms = np.linalg.norm(intr, axis=(1, 2))
        gaps = np.linalg.norm(mats - intr, axis=(1, 2)) / norms
        used_gap.extend(gaps[ok])
        used_eint.extend(_eigmax_sym(intr)[ok])
        used_eext.extend(_eigmax_sym(mats)[ok])
        j_bad = int(np.argmax(np.where(ok, gaps, -np.inf)))
        if worst is None or gaps[j_bad] > worst.rel_gap:
            worst = CrossSample(t=snap.t, theta=float(thetas[js[j_bad]]),
                                point=pts[j_bad], intrinsic=intr[j_bad],
                                extrinsic=mats[j_bad],
                                rel_gap=float(gaps[j_bad]))
    if worst is None:
        raise ConfigError("every sampled point was masked; the grid and "
                          "the trajectory do not overlap usefully")
    eint = float(np.max(used_eint))
    eext = float(np.max(used_eext))
    agree = (eint > sign_tol) == (eext > sign_tol)
    return CrossCheckReport(
        samples_used=len(used_gap), samples_skipped=skipped,
        max_rel_gap=float(np.max(used_gap)),
        mean_rel_gap=float(np.mean(used_gap)), worst=worst,
        intrinsic_worst_eig=eint, extrinsic_worst_eig=eext,
        signs_agree=bool(agree), sign_tol=sign_tol,
        stiffness_gate=stiffness_gate)
