"""Data-driven output regulation by value iteration with an internal model."""

from .datagen import build_data_matrices, check_rank_condition, make_exploration_input, simulate
from .fixtures import desk_fixture, make_problem
from .learner import count_unknowns, evaluate_controller, pi_lqr, vi_lqr, vi_or_first, vi_or_improved
from .oracle import LqrWeights, ViSettings, kleinman_pi, model_based_vi, solve_lyapunov, solve_regulator_equations
from .sysmodel import Exosystem, Plant, build_augmented, build_internal_model, check_assumptions, minimal_polynomial

__version__ = "0.1.0"
