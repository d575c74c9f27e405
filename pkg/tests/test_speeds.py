"""Speed functions: closed forms, duality, and the cone classifiers."""

import numpy as np
import pytest

from arrivallab.errors import (ConfigError, InvalidSegment,
                               NonPositiveCurvature, NonPositiveSpeed)
from arrivallab.speeds import (BUILTIN_SPEEDS, ConeSegment, CurveSpeed,
                               check_inverse_concavity, check_monotonicity,
                               dual, dual_evaluate, evaluate,
                               is_one_homogeneous, make_speed,
                               random_segments)

LAM = np.array([1.0, 4.0])

# ---------------------------------------------------------------------------
# closed forms


@pytest.mark.parametrize("name, expected", [
    ("mean_curvature", 5.0),
    ("gauss_curvature", 4.0),
    ("gauss_root", 2.0),
    ("harmonic_mean", 0.8),
    ("smallest_principal", 1.0),
])
def test_builtin_values_on_eigenvalue_pair(name, expected):
    spec = make_speed(name, dimension=2)
    assert np.isclose(evaluate(spec, LAM), expected, rtol=1e-14)


@pytest.mark.parametrize("p, expected", [
    (1.0, 2.5),       # arithmetic mean
    (0.0, 2.0),       # geometric mean
    (-1.0, 1.6),      # harmonic-type mean, n / sum(1/lam)
])
def test_power_mean_values(p, expected):
    spec = make_speed("power_mean", dimension=2, p=p)
    assert np.isclose(evaluate(spec, LAM), expected, rtol=1e-14)


def test_kappa_accepts_bare_curvature_and_powers():
    spec = make_speed("kappa", alpha=3.0)
    assert np.isclose(evaluate(spec, 2.0), 8.0)
    assert np.allclose(evaluate(spec, np.array([1.0, 2.0, 3.0])),
                       [1.0, 8.0, 27.0])


def test_matrix_input_is_frame_invariant():
    spec = make_speed("harmonic_mean", dimension=2)
    c, s = np.cos(0.7), np.sin(0.7)
    rot = np.array([[c, -s], [s, c]])
    m = rot @ np.diag(LAM) @ rot.T
    assert np.isclose(evaluate(spec, m, matrices=True),
                      evaluate(spec, LAM), rtol=1e-12)


def test_evaluate_enforces_cone_and_positivity():
    with pytest.raises(NonPositiveCurvature):
        evaluate(make_speed("mean_curvature", dimension=2),
                 np.array([1.0, -0.5]))
    with pytest.raises(NonPositiveSpeed):
        evaluate(make_speed("neg_mean_curvature", dimension=2), LAM)


# ---------------------------------------------------------------------------
# duality


def test_dual_of_mean_curvature_is_harmonic():
    h_spec = make_speed("mean_curvature", dimension=2)
    harm = make_speed("harmonic_mean", dimension=2)
    rng = np.random.default_rng(0)
    lam = rng.uniform(0.2, 5.0, size=(50, 2))
    assert np.allclose(dual_evaluate(h_spec, lam), evaluate(harm, lam),
                       rtol=1e-13)


def test_gauss_root_is_self_dual():
    spec = make_speed("gauss_root", dimension=3)
    rng = np.random.default_rng(1)
    lam = rng.uniform(0.2, 5.0, size=(50, 3))
    assert np.allclose(dual_evaluate(spec, lam), evaluate(spec, lam),
                       rtol=1e-13)


def test_duality_is_an_involution():
    spec = make_speed("harmonic_mean", dimension=2)
    twice = dual(dual(spec))
    rng = np.random.default_rng(2)
    lam = rng.uniform(0.2, 5.0, size=(50, 2))
    assert np.allclose(evaluate(twice, lam), evaluate(spec, lam), rtol=1e-13)
    assert twice.name == "dual(dual(harmonic_mean))"


# ---------------------------------------------------------------------------
# construction and validation


def test_make_speed_validation():
    with pytest.raises(ConfigError):
        make_speed("median_curvature")
    with pytest.raises(ConfigError):
        make_speed("kappa", dimension=2)
    with pytest.raises(ConfigError):
        make_speed("power_mean", dimension=2)  # missing p
    with pytest.raises(ConfigError):
        make_speed("mean_curvature", dimension=2, p=0.5)
    with pytest.raises(ConfigError):
        make_speed("power_mean", dimension=2, p=2.0)
    with pytest.raises(ConfigError):
        make_speed("kappa", alpha=0.0)
    assert "kappa" in BUILTIN_SPEEDS


def test_curve_speed_closed_forms():
    speed = CurveSpeed(make_speed("kappa", alpha=3.0))
    kappa = np.array([0.5, 1.0, 2.0])
    F, Fdot = speed.F_and_Fdot(kappa)
    assert np.allclose(F, kappa ** 3)
    assert np.allclose(Fdot, 3.0 * kappa ** 2)
    assert np.allclose(speed.F(kappa), F)


def test_curve_speed_rejects_unusable_specs():
    with pytest.raises(ConfigError):
        CurveSpeed(make_speed("mean_curvature", dimension=2))
    with pytest.raises(NonPositiveCurvature):
        CurveSpeed(make_speed("kappa")).F(np.array([0.0]))


def test_admissibility_check():
    CurveSpeed(make_speed("kappa", alpha=2.0)).check_admissible((0.5, 4.0))
    with pytest.raises(NonPositiveSpeed):
        neg = CurveSpeed(make_speed("neg_mean_curvature", dimension=1))
        neg.check_admissible((0.5, 4.0))
    with pytest.raises(ConfigError):
        CurveSpeed(make_speed("kappa")).check_admissible((-1.0, 2.0))


def test_cone_segment_validation():
    good = np.diag([1.0, 2.0])
    with pytest.raises(InvalidSegment):
        ConeSegment(np.array([[1.0, 0.5], [0.4, 1.0]]), good)
    with pytest.raises(InvalidSegment):
        ConeSegment(np.diag([1.0, -0.2]), good)
    with pytest.raises(InvalidSegment):
        ConeSegment(good, np.eye(3))


# ---------------------------------------------------------------------------
# classifiers


@pytest.mark.parametrize("name, dimension", [
    ("mean_curvature", 2),
    ("gauss_root", 2),
    ("gauss_root", 3),
    ("harmonic_mean", 2),
    ("kappa", 1),
])
def test_inverse_concave_speeds_pass(name, dimension):
    spec = make_speed(name, dimension=dimension)
    result = check_inverse_concavity(spec, n_segments=500, seed=0)
    assert result.passed, result.summary()
    assert result.witness is None


def test_smallest_principal_fails_with_midpoint_witness():
    spec = make_speed("smallest_principal", dimension=2)
    result = check_inverse_concavity(spec, n_segments=500, seed=0)
    assert result.verdict == "FAIL"
    w = result.witness
    # Recompute the midpoint violation from the recorded endpoints alone:
    # the dual lies below the chord at s = 1/2 by more than any tolerance.
    start, end = np.asarray(w["start"]), np.asarray(w["end"])

    def f_star(m):
        lam = np.linalg.eigvalsh(m)
        return 1.0 / np.min(1.0 / lam)

    chord = 0.5 * (f_star(start) + f_star(end))
    assert chord - f_star(0.5 * (start + end)) > 1e-6


def test_classifier_deterministic_under_seed():
    spec = make_speed("smallest_principal", dimension=2)
    a = check_inverse_concavity(spec, n_segments=300, seed=5)
    b = check_inverse_concavity(spec, n_segments=300, seed=5)
    assert a == b
    c = check_inverse_concavity(spec, n_segments=300, seed=6)
    assert c.witness != a.witness


def test_explicit_segments_accepted_and_checked():
    spec = make_speed("mean_curvature", dimension=2)
    segments = random_segments(2, 40, seed=3)
    result = check_inverse_concavity(spec, segments=segments)
    assert result.passed
    with pytest.raises(InvalidSegment):
        check_inverse_concavity(spec, segments=random_segments(3, 4))


def test_monotonicity_verdicts():
    assert check_monotonicity(make_speed("kappa"), seed=0).passed
    result = check_monotonicity(
        make_speed("neg_mean_curvature", dimension=2), seed=0)
    assert result.verdict == "FAIL"
    assert result.witness["violation"] > 1e-6
    assert "FAIL" in result.summary()


def test_one_homogeneity_verdicts():
    assert is_one_homogeneous(make_speed("mean_curvature", dimension=2)).passed
    assert is_one_homogeneous(
        make_speed("power_mean", dimension=2, p=0.5)).passed
    # Gauss curvature in dimension 2 is 2-homogeneous.
    result = is_one_homogeneous(make_speed("gauss_curvature", dimension=2))
    assert result.verdict == "FAIL"


def test_power_mean_ordering_property():
    rng = np.random.default_rng(11)
    specs = [make_speed("power_mean", dimension=3, p=p)
             for p in (-1.0, 0.0, 1.0)]
    for _ in range(25):
        lam = rng.uniform(0.1, 6.0, size=3)
        values = [float(evaluate(s, lam)) for s in specs]
        assert values[0] <= values[1] + 1e-12
        assert values[1] <= values[2] + 1e-12
