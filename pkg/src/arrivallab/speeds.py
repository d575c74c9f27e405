"""Curvature speed functions and their cone-level classification.

A speed is a symmetric function f of the principal curvatures, used by the
flow as F = f(kappa)^alpha with alpha > 0. Speeds are defined on eigenvalue
vectors in the positive cone; symmetric-matrix input is reduced with
numpy.linalg.eigvalsh first, so no property of f ever depends on the frame.

The classifiers at the bottom decide, by seeded random sampling, whether a
speed is inverse-concave (the dual f*(A) = 1/f(A^{-1}) is concave along
straight segments of positive matrices), monotone (nondecreasing under
positive semidefinite increments), and one-homogeneous. They sample the raw
symmetric function without positivity enforcement so that deliberately bad
candidates (negative speeds, convex duals) are classified FAIL rather than
rejected; `evaluate` is the strict entry point and raises on non-positive
data or values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (ConfigError, InvalidSegment, NonPositiveCurvature,
                     NonPositiveSpeed)

# Eigenvalues at or below this floor count as outside the positive cone.
CURVATURE_FLOOR = 1e-10


@dataclass(frozen=True)
class SpeedSpec:
    """A symmetric speed function together with its power and dimension.

    fn maps eigenvalue arrays of shape (..., dimension) to values (...);
    fn_prime, when provided, returns the per-eigenvalue partial derivatives
    with the same (..., dimension) shape. dimension is the number of
    principal curvatures the speed expects (1 for plane curves).
    """

    name: str
    dimension: int
    alpha: float
    fn: Callable[[np.ndarray], np.ndarray]
    fn_prime: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")


def _as_eigenvalues(spec: SpeedSpec, data: np.ndarray,
                    matrices: bool) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if matrices:
        if data.ndim < 2 or data.shape[-1] != data.shape[-2]:
            raise ConfigError("matrix input must have square trailing axes")
        lam = np.linalg.eigvalsh(data)
    else:
        lam = data
        if spec.dimension == 1 and (lam.ndim == 0
                                    or lam.shape[-1] != 1):
            # Scalar curvature input for plane-curve speeds.
            lam = lam[..., None]
    if lam.shape[-1] != spec.dimension:
        raise ConfigError(
            f"speed {spec.name!r} expects {spec.dimension} curvatures, "
            f"got {lam.shape[-1]}")
    return lam


def evaluate(spec: SpeedSpec, data: np.ndarray,
             matrices: bool = False) -> np.ndarray:
    """F = f(lambda)^alpha with cone and positivity enforcement.

    data holds eigenvalue vectors (..., dimension), or symmetric matrices
    (..., dimension, dimension) when matrices=True; plane-curve speeds also
    accept bare curvature arrays.
    """
    lam = _as_eigenvalues(spec, data, matrices)
    lam_min = lam.min(axis=-1)
    if np.any(lam_min <= CURVATURE_FLOOR):
        raise NonPositiveCurvature(
            f"speed {spec.name!r} evaluated outside the positive cone "
            f"(min eigenvalue {lam_min.min():.3e})")
    f = np.asarray(spec.fn(lam), dtype=float)
    if np.any(f <= 0):
        raise NonPositiveSpeed(
            f"speed {spec.name!r} returned non-positive value "
            f"{f.min():.3e}")
    return f ** spec.alpha


def dual(spec: SpeedSpec) -> SpeedSpec:
    """The dual speed f*(lambda) = 1 / f(1/lambda).

    Evaluating f on the inverse matrix only inverts its eigenvalues, so the
    dual needs no matrix inversion. Duality is an involution: dual(dual(f))
    agrees with f on the positive cone.
    """
    base_fn = spec.fn
    base_prime = spec.fn_prime

    def fn_star(lam: np.ndarray) -> np.ndarray:
        return 1.0 / base_fn(1.0 / lam)

    fn_prime_star = None
    if base_prime is not None:
        def fn_prime_star(lam: np.ndarray) -> np.ndarray:
            mu = 1.0 / lam
            fmu = np.asarray(base_fn(mu), dtype=float)
            return base_prime(mu) / (fmu[..., None] ** 2 * lam ** 2)

    return SpeedSpec(name=f"dual({spec.name})", dimension=spec.dimension,
                     alpha=spec.alpha, fn=fn_star, fn_prime=fn_prime_star,
                     params=dict(spec.params))


def dual_evaluate(spec: SpeedSpec, data: np.ndarray,
                  matrices: bool = False) -> np.ndarray:
    """Evaluate the dual speed (with the same enforcement as evaluate)."""
    return evaluate(dual(spec), data, matrices=matrices)


# --------------------------------------------------------------------------
# Built-in speeds


def _ones_prime(lam: np.ndarray) -> np.ndarray:
    return np.ones_like(lam)


def _builtin_specs(alpha: float, dimension: int,
                   p: float | None) -> dict[str, SpeedSpec]:
    n = dimension

    def gauss(lam):
        return np.prod(lam, axis=-1)

    def gauss_prime(lam):
        return np.prod(lam, axis=-1, keepdims=True) / lam

    def gauss_root(lam):
        return np.prod(lam, axis=-1) ** (1.0 / n)

    def gauss_root_prime(lam):
        g = np.prod(lam, axis=-1, keepdims=True) ** (1.0 / n)
        return g / (n * lam)

    def harmonic(lam):
        return 1.0 / np.sum(1.0 / lam, axis=-1)

    def harmonic_prime(lam):
        f = harmonic(lam)
        return (f ** 2)[..., None] / lam ** 2

    def smallest(lam):
        return np.min(lam, axis=-1)

    def smallest_prime(lam):
        # Subgradient: indicator of the minimal eigenvalue.
        m = np.min(lam, axis=-1, keepdims=True)
        ind = (lam == m).astype(float)
        return ind / ind.sum(axis=-1, keepdims=True)

    specs = {
        "kappa": SpeedSpec("kappa", 1, alpha,
                           fn=lambda lam: lam[..., 0],
                           fn_prime=_ones_prime),
        "mean_curvature": SpeedSpec("mean_curvature", n, alpha,
                                    fn=lambda lam: np.sum(lam, axis=-1),
                                    fn_prime=_ones_prime),
        "neg_mean_curvature": SpeedSpec(
            "neg_mean_curvature", n, alpha,
            fn=lambda lam: -np.sum(lam, axis=-1),
            fn_prime=lambda lam: -np.ones_like(lam)),
        "gauss_curvature": SpeedSpec("gauss_curvature", n, alpha,
                                     fn=gauss, fn_prime=gauss_prime),
        "gauss_root": SpeedSpec("gauss_root", n, alpha,
                                fn=gauss_root, fn_prime=gauss_root_prime),
        "harmonic_mean": SpeedSpec("harmonic_mean", n, alpha,
                                   fn=harmonic, fn_prime=harmonic_prime),
        "smallest_principal": SpeedSpec("smallest_principal", n, alpha,
                                        fn=smallest,
                                        fn_prime=smallest_prime),
    }

    if p is not None:
        if not -1.0 <= p <= 1.0:
            raise ConfigError(f"power mean exponent must lie in [-1, 1], "
                              f"got {p}")
        if p == 0.0:
            fn, fn_prime = gauss_root, gauss_root_prime
        else:
            def fn(lam, _p=p):
                return (np.mean(lam ** _p, axis=-1)) ** (1.0 / _p)

            def fn_prime(lam, _p=p):
                m = np.mean(lam ** _p, axis=-1, keepdims=True)
                return m ** (1.0 / _p - 1.0) * lam ** (_p - 1.0) / n
        specs["power_mean"] = SpeedSpec("power_mean", n, alpha, fn=fn,
                                        fn_prime=fn_prime, params={"p": p})
    return specs


BUILTIN_SPEEDS = ("kappa", "mean_curvature", "neg_mean_curvature",
                  "gauss_curvature", "gauss_root", "harmonic_mean",
                  "power_mean", "smallest_principal")


def make_speed(name: str, alpha: float = 1.0, dimension: int = 1,
               p: float | None = None) -> SpeedSpec:
    """Construct a built-in speed by name.

    p is the exponent of the power mean (required for "power_mean", p = 0
    giving the geometric mean) and is rejected for every other speed.
    """
    if name not in BUILTIN_SPEEDS:
        raise ConfigError(f"unknown speed {name!r}; "
                          f"choose one of {BUILTIN_SPEEDS}")
    if name == "kappa" and dimension != 1:
        raise ConfigError("the kappa speed is defined for plane curves only")
    if name == "power_mean":
        if p is None:
            raise ConfigError("power_mean requires the exponent p")
    elif p is not None:
        raise ConfigError(f"speed {name!r} takes no exponent p")
    return _builtin_specs(alpha, dimension, p)[name]


# --------------------------------------------------------------------------
# Plane-curve adapter used by the flow solver


class CurveSpeed:
    """Scalar view F(kappa) = f(kappa)^alpha of a dimension-1 speed.

    Fdot is the curvature derivative of F, which the solver needs both for
    the parabolic step-size bound and for the time derivative of the speed
    along the flow.
    """

    def __init__(self, spec: SpeedSpec):
        if spec.dimension != 1:
            raise ConfigError(
                f"curve flows need a dimension-1 speed, got "
                f"{spec.dimension} for {spec.name!r}")
        if spec.fn_prime is None:
            raise ConfigError(
                f"speed {spec.name!r} has no derivative; the solver "
                "requires one")
        self.spec = spec

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    def _f_and_prime(self, kappa: np.ndarray) -> tuple[np.ndarray,
                                                       np.ndarray]:
        kappa = np.asarray(kappa, dtype=float)
        if np.any(kappa <= CURVATURE_FLOOR):
            raise NonPositiveCurvature(
                f"curvature {kappa.min():.3e} at or below floor")
        lam = kappa[..., None]
        f = np.asarray(self.spec.fn(lam), dtype=float)
        fp = np.asarray(self.spec.fn_prime(lam), dtype=float)[..., 0]
        if np.any(f <= 0):
            raise NonPositiveSpeed(
                f"speed {self.name!r} non-positive at kappa="
                f"{kappa.min():.3e}")
        return f, fp

    def F(self, kappa: np.ndarray) -> np.ndarray:
        f, _ = self._f_and_prime(kappa)
        return f ** self.alpha

    def F_and_Fdot(self, kappa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """F and dF/dkappa = alpha f^(alpha-1) f'."""
        f, fp = self._f_and_prime(kappa)
        return f ** self.alpha, self.alpha * f ** (self.alpha - 1.0) * fp

    def check_admissible(self, kappa_range: tuple[float, float],
                         samples: int = 64) -> None:
        """Require f > 0 and f' > 0 over a sampled curvature interval.

        Degenerate or reversed parabolicity is rejected before a flow is
        started rather than diagnosed mid-run.
        """
        lo, hi = kappa_range
        if not (0 < lo <= hi):
            raise ConfigError(f"curvature range must be positive, got "
                              f"({lo}, {hi})")
        kappa = np.geomspace(lo, hi, samples)
        f, fp = self._f_and_prime(kappa)
        if np.any(fp <= 0):
            raise NonPositiveSpeed(
                f"speed {self.name!r} is not parabolic on "
                f"[{lo:.3g}, {hi:.3g}]: min f' = {fp.min():.3e}")


# --------------------------------------------------------------------------
# Cone segments and classification


@dataclass(frozen=True)
class ConeSegment:
    """Straight segment (1-s) start + s end of symmetric positive matrices."""

    start: np.ndarray
    end: np.ndarray

    def __post_init__(self) -> None:
        start = np.asarray(self.start, dtype=float)
        end = np.asarray(self.end, dtype=float)
        for label, m in (("start", start), ("end", end)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise InvalidSegment(f"{label} must be a square matrix")
            if not np.allclose(m, m.T, atol=1e-12):
                raise InvalidSegment(f"{label} must be symmetric")
            if np.linalg.eigvalsh(m).min() <= CURVATURE_FLOOR:
                raise InvalidSegment(
                    f"{label} endpoint is not positive definite")
        if start.shape != end.shape:
            raise InvalidSegment("endpoints must have matching shape")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def dimension(self) -> int:
        return self.start.shape[0]

    def matrices(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)[:, None, None]
        return (1.0 - ts) * self.start + ts * self.end


@dataclass(frozen=True)
class ClassificationResult:
    """Verdict of a sampled property check, with a falsifying witness."""

    property_name: str
    speed: str
    verdict: str
    witness: dict | None
    samples: int
    tolerance: float
    seed: int

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def summary(self) -> str:
        extra = ""
        if self.witness is not None:
            extra = f" (violation {self.witness['violation']:.3e})"
        return (f"{self.speed}: {self.property_name} {self.verdict} "
                f"[{self.samples} samples, tol {self.tolerance:.1e}, "
                f"seed {self.seed}]{extra}")


def _random_spd(rng: np.random.Generator, count: int,
                dim: int) -> np.ndarray:
    g = rng.normal(size=(count, dim, dim))
    return g @ np.swapaxes(g, -1, -2) + 0.05 * np.eye(dim)


def random_segments(dimension: int, count: int,
                    seed: int = 0) -> list[ConeSegment]:
    """Seeded sample of straight segments inside the positive cone."""
    rng = np.random.default_rng(seed)
    starts = _random_spd(rng, count, dimension)
    ends = _random_spd(rng, count, dimension)
    return [ConeSegment(s, e) for s, e in zip(starts, ends)]


_CHORD_GRID = np.linspace(0.0, 1.0, 17)  # includes the midpoint 1/2


def check_inverse_concavity(spec: SpeedSpec,
                            segments: Sequence[ConeSegment] | None = None,
                            n_segments: int = 200, seed: int = 0,
                            tol: float = 1e-9) -> ClassificationResult:
    """Sample concavity of the dual speed along cone segments.

    For each segment the dual f* is evaluated on a fixed parameter grid and
    compared against the chord through the endpoint values; any point where
    the chord exceeds the function by more than tol falsifies concavity. The
    witness records the worst segment and parameter.
    """
    if segments is None:
        segments = random_segments(spec.dimension, n_segments, seed=seed)
    for seg in segments:
        if seg.dimension != spec.dimension:
            raise InvalidSegment(
                f"segment dimension {seg.dimension} does not match speed "
                f"dimension {spec.dimension}")
    ts = _CHORD_GRID
    stacked = np.concatenate([seg.matrices(ts) for seg in segments], axis=0)
    lam = np.linalg.eigvalsh(stacked).reshape(len(segments), ts.size,
                                              spec.dimension)
    star = 1.0 / np.asarray(spec.fn(1.0 / lam), dtype=float)
    chord = (1.0 - ts) * star[:, :1] + ts * star[:, -1:]
    violation = chord - star
    worst_flat = int(np.argmax(violation))
    worst_seg, worst_t = np.unravel_index(worst_flat, violation.shape)
    worst = float(violation[worst_seg, worst_t])
    witness = None
    if worst > tol:
        seg = segments[worst_seg]
        witness = {
            "segment": int(worst_seg),
            "parameter": float(ts[worst_t]),
            "violation": worst,
            "start": seg.start.tolist(),
            "end": seg.end.tolist(),
        }
    return ClassificationResult(
        property_name="inverse_concavity", speed=spec.name,
        verdict="FAIL" if witness else "PASS", witness=witness,
        samples=len(segments) * ts.size, tolerance=tol, seed=seed)


def check_monotonicity(spec: SpeedSpec, samples: int = 200, seed: int = 0,
                       tol: float = 1e-9) -> ClassificationResult:
    """Sample monotonicity under positive semidefinite increments."""
    rng = np.random.default_rng(seed)
    dim = spec.dimension
    base = _random_spd(rng, samples, dim)
    g = rng.normal(size=(samples, dim, dim))
    scale = rng.uniform(0.01, 0.5, size=(samples, 1, 1))
    bump = scale * (g @ np.swapaxes(g, -1, -2))
    lam0 = np.linalg.eigvalsh(base)
    lam1 = np.linalg.eigvalsh(base + bump)
    f0 = np.asarray(spec.fn(lam0), dtype=float)
    f1 = np.asarray(spec.fn(lam1), dtype=float)
    drop = f0 - f1
    worst = int(np.argmax(drop))
    witness = None
    if drop[worst] > tol:
        witness = {
            "sample": worst,
            "violation": float(drop[worst]),
            "matrix": base[worst].tolist(),
            "increment": bump[worst].tolist(),
        }
    return ClassificationResult(
        property_name="monotonicity", speed=spec.name,
        verdict="FAIL" if witness else "PASS", witness=witness,
        samples=samples, tolerance=tol, seed=seed)


def is_one_homogeneous(spec: SpeedSpec, samples: int = 100, seed: int = 0,
                       tol: float = 1e-9) -> ClassificationResult:
    """Sample f(c lambda) = c f(lambda) over the positive cone."""
    rng = np.random.default_rng(seed)
    lam = rng.uniform(0.1, 5.0, size=(samples, spec.dimension))
    c = rng.uniform(0.1, 10.0, size=samples)
    f = np.asarray(spec.fn(lam), dtype=float)
    fc = np.asarray(spec.fn(c[:, None] * lam), dtype=float)
    err = np.abs(fc - c * f) / np.maximum(1.0, np.abs(c * f))
    worst = int(np.argmax(err))
    witness = None
    if err[worst] > tol:
        witness = {
            "sample": worst,
            "violation": float(err[worst]),
            "eigenvalues": lam[worst].tolist(),
            "scale": float(c[worst]),
        }
    return ClassificationResult(
        property_name="one_homogeneity", speed=spec.name,
        verdict="FAIL" if witness else "PASS", witness=witness,
        samples=samples, tolerance=tol, seed=seed)
