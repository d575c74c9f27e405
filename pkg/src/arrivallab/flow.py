"""Contracting curvature flows of convex curves in support form.

The normal flow with speed F moves every support line inward at rate F, so in
support-function form the PDE is pointwise in the angle:

    dh/dt (theta, t) = -F(kappa(theta, t)),    kappa = 1 / (h'' + h).

Time stepping is classical RK4 with an adaptive step chosen from the
linearized diffusion coefficient dF/dkappa * kappa^2 (the PDE linearizes to
dt(delta h) = Fdot kappa^2 (delta h'' + delta h)), which keeps the spectral
stability number fixed as curvature blows up toward extinction. The run stops
when the witness inradius min_theta h has contracted by a configured relative
factor; the final approach to the extinction point is left to the arrival
module, which extrapolates it from the stored history.

Snapshots are stored whenever any direction's support value has dropped by a
fixed fraction of the current witness inradius, so storage is geometric in
the remaining size and interpolation between snapshots stays uniformly
accurate in every direction, not just the slowest one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .differentiation import theta_grid
from .errors import ConfigError, ConvexityLost, StabilityViolation
from .geometry import RHO_FLOOR, SupportCurve
from .speeds import CurveSpeed, SpeedSpec, make_speed

STATUS_COMPLETED = "completed"
STATUS_CONVEXITY_LOST = "convexity_lost"
STATUS_STEP_LIMIT = "step_limit"

# The parabolic step bound is refreshed this often; the curvature radius
# drifts at most a few tenths of a percent per step, so the staleness is
# negligible against the factor ~2.8 spectral stability margin at cfl = 0.1.
_DT_REFRESH = 8


@dataclass(frozen=True)
class FlowOptions:
    """Tuning knobs for run(); defaults suit the shipped scenarios.

    snapshot_drop is the largest per-direction support decrease allowed
    between stored snapshots, relative to the current witness radius.
    """

    cfl: float = 0.1
    extinction_rel: float = 1e-3
    snapshot_drop: float = 0.004
    max_steps: int = 2_000_000
    max_halvings: int = 30
    dt_floor: float = 1e-14

    def __post_init__(self) -> None:
        if not 0 < self.cfl <= 0.25:
            # RK4 on the periodic Laplacian is stable up to
            # dt * D * (pi/dtheta)^2 = 2.79; cfl is that number over pi^2.
            raise ConfigError(f"cfl must lie in (0, 0.25], got {self.cfl}")
        if not 0 < self.extinction_rel < 1:
            raise ConfigError("extinction_rel must lie in (0, 1)")
        if not 0 < self.snapshot_drop < 0.5:
            raise ConfigError("snapshot_drop must lie in (0, 0.5)")


class _SpectralRho:
    """Cached spectral operator h -> h'' + h on a fixed grid size."""

    def __init__(self, n: int):
        k = np.fft.rfftfreq(n, d=1.0 / n)
        self.mult = 1.0 - k ** 2  # (ik)^2 + 1 acting on modes
        self.n = n

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return np.fft.irfft(np.fft.rfft(h) * self.mult, n=self.n)


def _speed_of_rho(speed: CurveSpeed) -> Callable[[np.ndarray], np.ndarray]:
    """F as a function of the curvature radius, on the fast path if possible.

    Every built-in speed reduces to the identity f(kappa) = kappa on plane
    curves, in which case F = rho^(-alpha) without any adapter overhead in
    the stepping loop. The reduction is detected numerically, not assumed.
    """
    exponent = _identity_exponent(speed)
    if exponent is not None:
        def fast(rho: np.ndarray, _a: float = exponent) -> np.ndarray:
            return rho ** (-_a)
        return fast

    def generic(rho: np.ndarray) -> np.ndarray:
        return speed.F(1.0 / rho)
    return generic


def _identity_exponent(speed: CurveSpeed) -> float | None:
    kappa = np.geomspace(1e-3, 1e3, 41)
    try:
        f, fp = speed._f_and_prime(kappa)
    except Exception:
        return None
    if (np.max(np.abs(f / kappa - 1.0)) < 1e-13
            and np.max(np.abs(fp - 1.0)) < 1e-13):
        return speed.alpha
    return None


def _diffusion(rho: np.ndarray, speed: CurveSpeed) -> float:
    """max over the grid of Fdot * kappa^2, the linearized diffusivity."""
    kappa = 1.0 / rho
    _, fdot = speed.F_and_Fdot(kappa)
    return float(np.max(fdot * kappa ** 2))


def _check_rho(rho: np.ndarray) -> np.ndarray:
    m = rho.min()
    if not m > RHO_FLOOR:
        raise ConvexityLost(f"curvature radius reached {m:.3e}")
    return rho


def _rk4(h: np.ndarray, dt: float, rho_op: _SpectralRho,
         F_of_rho: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    k1 = -F_of_rho(_check_rho(rho_op(h)))
    k2 = -F_of_rho(_check_rho(rho_op(h + 0.5 * dt * k1)))
    k3 = -F_of_rho(_check_rho(rho_op(h + 0.5 * dt * k2)))
    k4 = -F_of_rho(_check_rho(rho_op(h + dt * k3)))
    out = h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise ConvexityLost("non-finite support values after a step")
    return out


def _advance(h: np.ndarray, dt: float, rho_op: _SpectralRho,
             F_of_rho: Callable[[np.ndarray], np.ndarray],
             halvings_left: int, dt_floor: float) -> np.ndarray:
    try:
        return _rk4(h, dt, rho_op, F_of_rho)
    except ConvexityLost:
        if halvings_left <= 0:
            raise
        if dt / 2.0 < dt_floor:
            raise StabilityViolation(
                f"step size fell below the floor {dt_floor:.1e}") from None
        h_mid = _advance(h, dt / 2.0, rho_op, F_of_rho, halvings_left - 1,
                         dt_floor)
        return _advance(h_mid, dt / 2.0, rho_op, F_of_rho, halvings_left - 1,
                        dt_floor)


def step(curve: SupportCurve, speed: SpeedSpec | CurveSpeed, dt: float,
         max_halvings: int = 30, dt_floor: float = 1e-14) -> SupportCurve:
    """Advance one step of size dt, halving the step on failure.

    A stage that leaves the convex cone (or produces non-finite values) is
    retried as two half steps, recursively, up to max_halvings; asking for a
    sub-floor step raises StabilityViolation instead of looping forever.
    """
    if isinstance(speed, SpeedSpec):
        speed = CurveSpeed(speed)
    rho_op = _SpectralRho(curve.n)
    h = _advance(curve.h, dt, rho_op, _speed_of_rho(speed), max_halvings,
                 dt_floor)
    return SupportCurve(h=h, origin=curve.origin, scheme=curve.scheme)


@dataclass(frozen=True)
class FlowSnapshot:
    """One stored time slice with the derived boundary fields.

    F_s and F_ss are arclength derivatives of the speed along the curve, and
    dtF is its time derivative along the flow,
    dtF = Fdot(kappa) * (F_ss + kappa^2 F).
    """

    t: float
    curve: SupportCurve
    kappa: np.ndarray
    F: np.ndarray
    F_s: np.ndarray
    F_ss: np.ndarray
    dtF: np.ndarray


def curve_snapshot(curve: SupportCurve, speed: SpeedSpec | CurveSpeed,
                   t: float) -> FlowSnapshot:
    """Derive the snapshot fields of a single curve at a given time.

    Useful for curves produced by integrate_to, which land on an exact time
    instead of the stored cadence; the fields are computed the same way the
    trajectory computes them for stored slices.
    """
    if isinstance(speed, SpeedSpec):
        speed = CurveSpeed(speed)
    kappa = curve.curvature()
    F, fdot = speed.F_and_Fdot(kappa)
    F_s, F_ss = curve.arclength_derivatives(F)
    dtF = fdot * (F_ss + kappa ** 2 * F)
    return FlowSnapshot(t=float(t), curve=curve, kappa=kappa, F=F, F_s=F_s,
                        F_ss=F_ss, dtF=dtF)


@dataclass
class FlowTrajectory:
    """Compact history of a flow run: support and speed values per snapshot."""

    times: np.ndarray
    h_stack: np.ndarray
    F_stack: np.ndarray
    origin: np.ndarray
    scheme: str
    speed: CurveSpeed
    t0: float
    status: str
    steps_taken: int
    _snapshots: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not np.all(np.diff(self.times) > 0):
            raise ConfigError("snapshot times must increase strictly")
        if self.h_stack.shape != (self.times.size, self.h_stack.shape[1]):
            raise ConfigError("snapshot array shapes disagree")

    @property
    def n_snapshots(self) -> int:
        return self.times.size

    @property
    def alpha(self) -> float:
        return self.speed.alpha

    def witness_radius(self) -> np.ndarray:
        """min_theta h per snapshot (inradius witnessed at the origin)."""
        return self.h_stack.min(axis=1)

    def curve(self, i: int) -> SupportCurve:
        return SupportCurve(h=self.h_stack[i], origin=self.origin,
                            scheme=self.scheme)

    def snapshot(self, i: int) -> FlowSnapshot:
        """Materialize snapshot i with its derived fields (cached)."""
        i = int(range(self.n_snapshots)[i])  # normalize negative indices
        if i not in self._snapshots:
            self._snapshots[i] = curve_snapshot(self.curve(i), self.speed,
                                                self.times[i])
        return self._snapshots[i]

    def extinction_estimate(self, fit_last: int = 12) -> tuple[float,
                                                               np.ndarray]:
        """Extrapolated extinction time and point.

        Near extinction the curve is asymptotically round, and a round curve
        of inradius r satisfies d(r^(1+alpha))/dt = -(1+alpha), exactly
        linear in t. A least-squares line through r^(1+alpha) over the last
        stored snapshots gives the root; the extinction point is the Steiner
        point of the last curve.
        """
        k = min(fit_last, self.n_snapshots)
        if k < 2:
            raise ConfigError("need at least two snapshots to extrapolate")
        ts = self.times[-k:]
        rs = np.empty(k)
        for j in range(k):
            rs[j] = self.curve(self.n_snapshots - k + j).inradius()
        y = rs ** (1.0 + self.alpha)
        slope, intercept = np.polyfit(ts, y, 1)
        if not slope < 0:
            raise ConfigError("inradius power is not decreasing; cannot "
                              "extrapolate extinction")
        t_ext = float(-intercept / slope)
        if t_ext <= self.times[-1]:
            # Round-off can put the root a hair inside the last snapshot.
            t_ext = float(self.times[-1]) + 1e-15
        p_ext = self.curve(self.n_snapshots - 1).steiner_point()
        return t_ext, p_ext

    # -- serialization ----------------------------------------------------

    def save(self, directory: str | Path, stride: int = 1) -> None:
        """Write meta.json and snapshots.csv under directory.

        stride thins the stored snapshots (first and last always kept).
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        idx = list(range(0, self.n_snapshots, max(1, int(stride))))
        if idx[-1] != self.n_snapshots - 1:
            idx.append(self.n_snapshots - 1)
        meta = {
            "t0": self.t0,
            "status": self.status,
            "steps_taken": self.steps_taken,
            "scheme": self.scheme,
            "speed": {"name": self.speed.name, "alpha": self.speed.alpha,
                      "params": self.speed.spec.params},
            "origin": self.origin.tolist(),
            "grid_size": int(self.h_stack.shape[1]),
            "snapshots": len(idx),
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2))
        thetas = theta_grid(self.h_stack.shape[1])
        with open(directory / "snapshots.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "theta", "h", "kappa", "F", "F_s", "F_ss",
                             "dtF"])
            for i in idx:
                snap = self.snapshot(i)
                for j in range(thetas.size):
                    # repr of builtin floats round-trips exactly.
                    writer.writerow(
                        [repr(float(v)) for v in
                         (snap.t, thetas[j], snap.curve.h[j], snap.kappa[j],
                          snap.F[j], snap.F_s[j], snap.F_ss[j], snap.dtF[j])])

    @staticmethod
    def load(directory: str | Path) -> "FlowTrajectory":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        rows: dict[float, dict[str, list[float]]] = {}
        with open(directory / "snapshots.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                t = float(row["t"])
                slot = rows.setdefault(t, {"h": [], "F": []})
                slot["h"].append(float(row["h"]))
                slot["F"].append(float(row["F"]))
        times = np.array(sorted(rows))
        h_stack = np.array([rows[t]["h"] for t in times])
        F_stack = np.array([rows[t]["F"] for t in times])
        sp = meta["speed"]
        spec = make_speed(sp["name"], alpha=sp["alpha"], dimension=1,
                          p=sp["params"].get("p"))
        return FlowTrajectory(
            times=times, h_stack=h_stack, F_stack=F_stack,
            origin=np.asarray(meta["origin"], dtype=float),
            scheme=meta["scheme"], speed=CurveSpeed(spec), t0=meta["t0"],
            status=meta["status"], steps_taken=meta["steps_taken"])


def run(initial: SupportCurve, speed: SpeedSpec | CurveSpeed,
        t0: float = 0.0,
        options: FlowOptions | None = None) -> FlowTrajectory:
    """Flow a curve until its witness inradius contracts by extinction_rel.

    The witness inradius is min_theta h, the largest circle about the origin
    inside the body, so the origin must be an interior point (factories place
    it at the center). Admissibility (f > 0, f' > 0) is checked up front over
    the curvature range the run can visit.
    """
    if options is None:
        options = FlowOptions()
    if isinstance(speed, SpeedSpec):
        speed = CurveSpeed(speed)
    h = initial.h.copy()
    if h.min() <= 0:
        raise ConfigError("the origin must lie inside the initial curve")
    rho_op = _SpectralRho(initial.n)
    F_of_rho = _speed_of_rho(speed)

    kappa0 = initial.curvature()
    r_w0 = float(h.min())
    stop_radius = options.extinction_rel * r_w0
    # Curvature cannot fall below its initial minimum under contraction of
    # convex curves, and grows like 1/r toward the stop radius.
    speed.check_admissible((0.5 * float(kappa0.min()), 2.0 / stop_radius))

    times = [float(t0)]
    h_snaps = [h.copy()]
    F_snaps = [F_of_rho(rho_op(h))]
    h_stored = h.copy()

    t = float(t0)
    status = STATUS_STEP_LIMIT
    steps = 0
    dt = 0.0
    try:
        while steps < options.max_steps:
            r_w = h.min()
            if r_w <= stop_radius:
                status = STATUS_COMPLETED
                break
            if steps % _DT_REFRESH == 0:
                dt = options.cfl * (2.0 * np.pi / h.size) ** 2 \
                    / _diffusion(_check_rho(rho_op(h)), speed)
            h = _advance(h, dt, rho_op, F_of_rho, options.max_halvings,
                         options.dt_floor)
            if h.min() <= 0:
                raise ConvexityLost("origin left the shrinking body")
            t += dt
            steps += 1
            r_w = h.min()
            # Cadence keys on the largest support decrease across
            # directions: eccentric shapes sweep fastest far from the
            # witness direction, and the reconstruction interpolates
            # between snapshots direction by direction.  The t guard
            # skips snapshots once dt falls below time resolution in
            # the terminal millimeters of the flow.
            if ((h_stored - h).max() >= options.snapshot_drop * r_w
                    or r_w <= stop_radius) and t > times[-1]:
                times.append(t)
                h_snaps.append(h.copy())
                F_snaps.append(F_of_rho(rho_op(h)))
                h_stored = h.copy()
    except ConvexityLost:
        status = STATUS_CONVEXITY_LOST

    if t > times[-1] and status != STATUS_CONVEXITY_LOST:
        times.append(t)
        h_snaps.append(h.copy())
        F_snaps.append(F_of_rho(rho_op(h)))

    return FlowTrajectory(
        times=np.asarray(times), h_stack=np.asarray(h_snaps),
        F_stack=np.asarray(F_snaps), origin=initial.origin.copy(),
        scheme=initial.scheme, speed=speed, t0=float(t0), status=status,
        steps_taken=steps)


def integrate_to(initial: SupportCurve, speed: SpeedSpec | CurveSpeed,
                 t0: float, t1: float,
                 options: FlowOptions | None = None) -> SupportCurve:
    """Advance a curve from t0 to exactly t1 (the last step is clamped)."""
    if options is None:
        options = FlowOptions()
    if isinstance(speed, SpeedSpec):
        speed = CurveSpeed(speed)
    if t1 < t0:
        raise ConfigError("cannot integrate backward in time")
    rho_op = _SpectralRho(initial.n)
    F_of_rho = _speed_of_rho(speed)
    h = initial.h.copy()
    t = float(t0)
    steps = 0
    while t < t1:
        if steps >= options.max_steps:
            raise StabilityViolation("step limit reached before the target "
                                     "time")
        dt = options.cfl * (2.0 * np.pi / h.size) ** 2 \
            / _diffusion(_check_rho(rho_op(h)), speed)
        dt = min(dt, t1 - t)
        h = _advance(h, dt, rho_op, F_of_rho, options.max_halvings,
                     options.dt_floor)
        t += dt
        steps += 1
    return SupportCurve(h=h, origin=initial.origin, scheme=initial.scheme)
