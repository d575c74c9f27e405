"""Numerical laboratory for arrival-time concavity of contracting flows.

A convex plane curve is contracted by a curvature speed F = f(kappa)^alpha,
the arrival time u of the sweep is reconstructed on a grid, and the
concavity of monotone transforms of u, together with the equivalent
differential Harnack inequalities, is verified by independent numerical
routes that must agree.
"""

from .arrival import (ArrivalField, TransformedField, gradient_identity_residual,
                      level_set_residual, reconstruct, transform,
                      transformed_derivatives)
from .concavity import (ConcavityReport, ZSearchOptions, ancient_proxy_check,
                        hessian_concavity, korevaar_z, korevaar_z_search)
from .errors import (ArrivalLabError, ConfigError, ConvexityLost,
                     DegenerateGradient, InvalidSegment, MaskedPoint,
                     NonMonotoneContainment, NonPositiveCurvature,
                     NonPositiveSpeed, StabilityViolation)
from .flow import (FlowOptions, FlowSnapshot, FlowTrajectory, curve_snapshot,
                   integrate_to, run, step)
from .geometry import (SupportCurve, circle_curve, ellipse_curve,
                       fourier_curve)
from .harnack import (CrossCheckReport, HarnackReport, MonotonicityReport,
                      boundary_hessian, cross_check_at, direction_quadratic,
                      equivalence_check, harnack_values,
                      time_term_monotonicity, trajectory_harnack)
from .speeds import (ClassificationResult, ConeSegment, CurveSpeed, SpeedSpec,
                     check_inverse_concavity, check_monotonicity, dual,
                     dual_evaluate, evaluate, is_one_homogeneous, make_speed,
                     random_segments)

__version__ = "0.1.0"

__all__ = [
    "ArrivalField", "TransformedField", "gradient_identity_residual",
    "level_set_residual", "reconstruct", "transform",
    "transformed_derivatives",
    "ConcavityReport", "ZSearchOptions", "ancient_proxy_check",
    "hessian_concavity", "korevaar_z", "korevaar_z_search",
    "ArrivalLabError", "ConfigError", "ConvexityLost", "DegenerateGradient",
    "InvalidSegment", "MaskedPoint", "NonMonotoneContainment",
    "NonPositiveCurvature", "NonPositiveSpeed", "StabilityViolation",
    "FlowOptions", "FlowSnapshot", "FlowTrajectory", "curve_snapshot",
    "integrate_to", "run", "step",
    "SupportCurve", "circle_curve", "ellipse_curve", "fourier_curve",
    "CrossCheckReport", "HarnackReport", "MonotonicityReport",
    "boundary_hessian", "cross_check_at", "direction_quadratic",
    "equivalence_check", "harnack_values", "time_term_monotonicity",
    "trajectory_harnack",
    "ClassificationResult", "ConeSegment", "CurveSpeed", "SpeedSpec",
    "check_inverse_concavity", "check_monotonicity", "dual", "dual_evaluate",
    "evaluate", "is_one_homogeneous", "make_speed", "random_segments",
    "__version__",
]
