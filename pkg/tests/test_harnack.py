"""Harnack quantities: frozen circle values, minimization, cross-checks."""

import json

import numpy as np
import pytest

from arrivallab.errors import ConfigError, MaskedPoint
from arrivallab.flow import FlowOptions, curve_snapshot, integrate_to
from arrivallab.geometry import circle_curve
from arrivallab.harnack import (boundary_hessian, cross_check_at,
                                direction_quadratic, equivalence_check,
                                harnack_values, time_term_monotonicity,
                                trajectory_harnack)
from arrivallab.speeds import CurveSpeed, make_speed

# Shrinking circle of initial radius 1: r(t) = (1 - (1+a) t)^(1/(1+a)) with
# F_s = 0 and dtF = a kappa^(2a+1), so Q = a r^-(2a+1) + a r^-a / ((1+a) t).
# At the half-life t = T/2 = 1 / (2 (1+a)) both terms are algebraic numbers.
Q_MCF_HALF_LIFE = 4.0 * np.sqrt(2.0)                  # a = 1, t = 1/4
Q_CUBED_HALF_LIFE = 3.0 * 2**1.75 + 6.0 * 2**0.75     # a = 3, t = 1/8


def circle_snapshot(alpha, t, n=256):
    r = (1.0 - (1.0 + alpha) * t) ** (1.0 / (1.0 + alpha))
    speed = CurveSpeed(make_speed("kappa", alpha=alpha))
    return curve_snapshot(circle_curve(r, n=n), speed, t)


@pytest.mark.parametrize("alpha,t,expected", [
    (1.0, 0.25, Q_MCF_HALF_LIFE),
    (3.0, 0.125, Q_CUBED_HALF_LIFE),
])
def test_circle_half_life_oracles(alpha, t, expected):
    snap = circle_snapshot(alpha, t)
    q = harnack_values(snap, alpha, t0=0.0, mode="flow")
    assert np.max(np.abs(q - expected)) <= 1e-12 * expected


def test_flowed_circle_matches_closed_form():
    speed = CurveSpeed(make_speed("kappa", alpha=1.0))
    curve = integrate_to(circle_curve(1.0, n=128), speed, 0.0, 0.25,
                         options=FlowOptions(cfl=0.15))
    snap = curve_snapshot(curve, speed, 0.25)
    q = harnack_values(snap, 1.0, t0=0.0, mode="flow")
    assert np.max(np.abs(q - Q_MCF_HALF_LIFE)) <= 1e-10 * Q_MCF_HALF_LIFE


def test_direction_quadratic_dominates_and_attains(ellipse_mcf):
    traj, _ = ellipse_mcf
    snap = traj.snapshot(traj.n_snapshots // 2)
    q_min = harnack_values(snap, traj.alpha, t0=0.0, mode="flow")
    v_star = -snap.F_s / snap.kappa
    attained = direction_quadratic(snap, traj.alpha, v_star, t0=0.0)
    assert np.max(np.abs(attained - q_min)) <= 1e-12 * np.max(np.abs(q_min))
    rng = np.random.default_rng(7)
    for v in rng.normal(scale=3.0, size=40):
        assert np.all(direction_quadratic(snap, traj.alpha, v, t0=0.0)
                      >= q_min - 1e-12)


def test_ancient_mode_drops_exactly_the_time_term():
    snap = circle_snapshot(2.0, 0.1)
    flow = harnack_values(snap, 2.0, t0=0.0, mode="flow")
    ancient = harnack_values(snap, 2.0, mode="ancient")
    term = 2.0 * snap.F / (3.0 * 0.1)
    assert np.allclose(flow - ancient, term, rtol=1e-14, atol=0.0)


def test_time_term_requires_future_time():
    snap = circle_snapshot(1.0, 0.25)
    with pytest.raises(ConfigError):
        harnack_values(snap, 1.0, t0=0.25, mode="flow")
    assert np.all(np.isfinite(harnack_values(snap, 1.0, t0=0.25,
                                             mode="ancient")))


def test_unknown_mode_rejected():
    snap = circle_snapshot(1.0, 0.25)
    with pytest.raises(ConfigError):
        harnack_values(snap, 1.0, mode="parabolic")


def test_boundary_hessian_circle_eigenvalues():
    # MCF circle at t = 1/4: w = sqrt(1/2) and the frame-diagonal entries
    # are -1/w and -1/w^3 (tangential and normal curvatures of the
    # hemisphere profile sqrt(1 - |x|^2) at radius |x| = w... the normal
    # entry picks up the rank-one transform term).
    snap = circle_snapshot(1.0, 0.25)
    mats = boundary_hessian(snap, 1.0, t0=0.0)
    w = np.sqrt(0.5)
    assert np.max(np.abs(mats[:, 0, 0] + 1.0 / w)) <= 1e-12
    assert np.max(np.abs(mats[:, 1, 1] + 1.0 / w**3)) <= 1e-12
    assert np.max(np.abs(mats[:, 0, 1])) <= 1e-12


def test_boundary_hessian_determinant_encodes_harnack(ellipse_mcf):
    # det D2w = w^(-2a) kappa Q / F^4 ties the assembly to the Harnack
    # quantity; checking it on eccentric data exercises every entry.
    traj, _ = ellipse_mcf
    snap = traj.snapshot(traj.n_snapshots // 3)
    alpha = traj.alpha
    mats = boundary_hessian(snap, alpha, t0=0.0)
    q = harnack_values(snap, alpha, t0=0.0, mode="flow")
    w_pow = (1.0 + alpha) * snap.t
    w = w_pow ** (1.0 / (1.0 + alpha))
    expected = w ** (-2.0 * alpha) * snap.kappa * q / snap.F ** 4
    det = np.linalg.det(mats)
    assert np.max(np.abs(det - expected)) <= 1e-10 * np.max(np.abs(expected))
    # Positivity of Q and negative-definiteness of the assembly are the
    # same statement; both must hold on a convex flow.
    assert np.all(q > 0.0)
    eigmax = np.linalg.eigvalsh(mats)[:, -1]
    assert np.all(eigmax < 0.0)


def test_trajectory_report_positive_on_ellipse(ellipse_mcf):
    traj, _ = ellipse_mcf
    report = trajectory_harnack(traj)
    assert report.min_value > 0.0
    assert report.minima.shape == report.times.shape
    assert report.n_skipped >= 1
    assert report.min_value == pytest.approx(report.minima.min())
    assert report.witness_t in report.times


def test_trajectory_report_save(tmp_path, ellipse_mcf):
    traj, _ = ellipse_mcf
    report = trajectory_harnack(traj)
    report.save(tmp_path, stride=200)
    meta = json.loads((tmp_path / "harnack.json").read_text())
    assert meta["min_value"] == report.min_value
    assert meta["n_evaluated"] == report.times.size
    rows = (tmp_path / "harnack.csv").read_text().strip().split("\n")
    kept = len(range(0, report.times.size, 200))
    if (report.times.size - 1) % 200:
        kept += 1
    assert rows[0] == "t,theta,Q"
    assert len(rows) == 1 + kept * traj.h_stack.shape[1]


def test_monotonicity_backward_reference(ellipse_mcf):
    traj, _ = ellipse_mcf
    report = time_term_monotonicity(traj, [0.0, -1.0, -10.0])
    assert report.monotone
    assert report.minima[0] > 0.0
    assert list(report.t0_values) == [0.0, -1.0, -10.0]


def test_equivalence_circle(circle_mcf):
    traj, field = circle_mcf
    report = equivalence_check(traj, field, samples=256)
    assert report.samples_used >= 128
    assert report.max_rel_gap <= 5e-3
    assert report.signs_agree
    assert report.intrinsic_worst_eig < 0.0
    assert report.extrinsic_worst_eig < 0.0
    assert report.worst.rel_gap == report.max_rel_gap


def test_equivalence_deterministic(circle_mcf):
    traj, field = circle_mcf
    a = equivalence_check(traj, field, samples=128)
    b = equivalence_check(traj, field, samples=128)
    assert a.to_dict() == b.to_dict()


def test_cross_check_single_point(circle_mcf):
    traj, field = circle_mcf
    i_mid = int(np.argmin(np.abs(traj.witness_radius() - 0.5)))
    sample = cross_check_at(traj, field, i_mid, 7)
    assert sample.rel_gap <= 1e-4
    assert sample.intrinsic.shape == (2, 2)
    # Curves deep inside the extinction exclusion disk are masked.
    i_late = int(np.argmin(np.abs(traj.witness_radius() - 0.05)))
    with pytest.raises(MaskedPoint):
        cross_check_at(traj, field, i_late, 0)


def test_pairing_mismatch_rejected(circle_mcf, circle_alpha3):
    traj, _ = circle_mcf
    _, field3 = circle_alpha3
    with pytest.raises(ConfigError):
        equivalence_check(traj, field3)
