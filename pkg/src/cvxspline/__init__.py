"""Convex B-spline regression with rate-adaptive knot selection."""

from .cone_qp import ConeProblem, ConeSolution, enumerate_oracle, kkt_certificate, solve
from .estimators import AdaptiveConfig, FittedSpline, adapt_point, adapt_sup, fit_fixed_r, sigma_mle
from .splines import SplineBasis, build_design, eval_basis, make_basis

__all__ = [
    "AdaptiveConfig", "ConeProblem", "ConeSolution", "FittedSpline", "SplineBasis",
    "adapt_point", "adapt_sup", "build_design", "enumerate_oracle", "eval_basis",
    "fit_fixed_r", "kkt_certificate", "make_basis", "sigma_mle", "solve",
]
__version__ = "0.1.0"
