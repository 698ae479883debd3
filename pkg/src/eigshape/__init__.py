"""Shape optimization of the first Dirichlet eigenvalue for rough elliptic operators."""
from ._version import __version__
from .coeff import (CoeffField, EllipticityError, make_checkerboard, make_identity,
                    make_random_piecewise, validate_ellipticity)
from .config import ConfigError, ExperimentConfig, parse_config, serialize
from .diagnostics import (FreeBoundary, RegularityFit, RescaleParams, boundary_growth_fit,
                          caccioppoli_ratio, equivalence_check, extract_free_boundary, holder_fit,
                          rescale_field, verify_rescaling_identity)
from .eigensolver import EigenResult, dense_oracle, inflate_to_volume, lambda1, monotonicity_check
from .estimator import EigenShapeOptimizer
from .functional import FunctionalValue, PenaltyParams, descent_direction, evaluate, smeared_volume
from .io import read_coeff, read_field, write_coeff, write_field
from .mesh import Box, DomainMask, Mesh, ScalarField, ball_indicator, build_mesh
from .optimizer import MinimizerResult, Schedule, minimize, project, smoothed_ball
from .pipeline import RunReport, run_experiment

__all__ = [
    "__version__", "Box", "Mesh", "ScalarField", "DomainMask", "build_mesh", "ball_indicator",
    "CoeffField", "EllipticityError", "validate_ellipticity", "make_identity", "make_checkerboard",
    "make_random_piecewise", "PenaltyParams", "FunctionalValue", "evaluate", "smeared_volume",
    "descent_direction", "Schedule", "MinimizerResult", "minimize", "project", "smoothed_ball",
    "EigenResult", "lambda1", "dense_oracle", "monotonicity_check", "inflate_to_volume",
    "RescaleParams", "RegularityFit", "FreeBoundary", "rescale_field", "verify_rescaling_identity",
    "caccioppoli_ratio", "holder_fit", "extract_free_boundary", "boundary_growth_fit",
    "equivalence_check", "ExperimentConfig", "ConfigError", "parse_config", "serialize",
    "run_experiment", "RunReport", "read_field", "write_field", "read_coeff", "write_coeff",
    "EigenShapeOptimizer",
]
