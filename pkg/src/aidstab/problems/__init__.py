"""Bundled bi-level problems."""

from .base import Instance, Problem, SingularHessianError, check_strong_convexity
from .constants import ProblemConstants, analytic_constants, constants_from_points
from .data_weighting import DataWeightingProblem, make_data_weighting
from .io import GENERATORS, load_instance, make_instance, save_instance
from .mixture import MixtureProblem, make_mixture
from .quadratic import QuadraticProblem, make_quadratic
from .ridge import RidgeHyperProblem, make_ridge, make_scalar_ridge
from .toy_transfer import ToyTransferProblem, make_toy_transfer

__all__ = [
    "Instance", "Problem", "SingularHessianError", "check_strong_convexity",
    "ProblemConstants", "analytic_constants", "constants_from_points",
    "MixtureProblem", "make_mixture", "RidgeHyperProblem", "make_ridge", "make_scalar_ridge",
    "ToyTransferProblem", "make_toy_transfer", "DataWeightingProblem", "make_data_weighting",
    "QuadraticProblem", "make_quadratic", "GENERATORS", "load_instance", "make_instance", "save_instance",
]
