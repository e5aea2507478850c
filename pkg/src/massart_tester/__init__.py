"""Tester-learner for general Massart halfspaces under Gaussian marginals,
with constructive multiplicative sandwiching polynomials."""

from .precision import get_bits, set_bits, workprec
from .poly import (Polynomial, chebyshev, chebyshev_over_x, hermite_normalized,
                   evaluate, evaluate_float, gaussian_moment,
                   gaussian_expectation, compose_affine, antiderivative,
                   power, enumerate_multi_indices, hermite_tensor_eval)
from .quadrature import quadrature_oracle, QuadratureError
from .sandwich import (SandwichConstants, SandwichParams, SandwichPair,
                       DEFAULT_CONSTANTS, select_params, bump_f, normalization,
                       step_poly, build_sandwich, verify_pair,
                       calibrate_constants, normal_sf, normal_cdf,
                       InfeasibleParameters)
from .data import (Halfspace, MassartModel, Dataset, sample_gaussian,
                   massart_labels, bias_of, adversary, opt_error_bruteforce,
                   generate_dataset, save_dataset, load_dataset)
from .tester import (TesterParams, Slice, TestReport, schedule, build_slices,
                     orthobasis, run_tester, DESK_PROFILE)
from .learner import (LearnerSpec, oracle_learner, chow_sweep_learner,
                      bias_agnostic)
from .estimator import MassartTesterLearner

__version__ = "0.1.0"
