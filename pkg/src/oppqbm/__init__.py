"""Eigenenergy bounds from orthonormal-polynomial projections of moment equations."""
from .errors import *  # noqa: F401,F403
from .precision import working_precision, real, fmt
from .mer import ProblemSpec, CoeffTable, build_coeff_table, build_derivative_table, generate_qzm_moments
from .weights import WeightSpec, BasisTable, build_basis, omega_table, weight_moments_1d
from .problems import HarmonicSpec, QuarticSpec, QzmSpec, register_problem, problem_by_name, qzm_energy_map
from .cdr import Evaluator, lambda_vectors, partial_sum, p_matrix, lambda_min, cqfm_value, d_lambda_min

__version__ = "0.1.0"
