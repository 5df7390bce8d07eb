"""Discounted penalty functions for the compound Poisson surplus process with
credit interest and an optional dividend barrier.

Three routes to the same quantity cross-validate each other: a collocation
network solver (`pinn`), a Volterra second-kind reference solver
(`volterra`), and a path simulator (`montecarlo`), with the exact no-barrier
starting value supplied by `initial_value`.
"""

from .initial_value import classical_zero_value, compute_initial_value, kappa, phi_infinity_at_zero
from .montecarlo import MonteCarloEstimate, SimConfig, estimate, simulate_path
from .network import MLPParams
from .pinn import ProblemSpec, TrainConfig, evaluate, train
from .risk_model import ClaimDistribution, PenaltyCase, RiskModel
from .volterra import SolutionTable, combine_barrier, solve_h, solve_phi_infinity

__version__ = "0.1.0"

__all__ = [
    "ClaimDistribution",
    "MLPParams",
    "MonteCarloEstimate",
    "PenaltyCase",
    "ProblemSpec",
    "RiskModel",
    "SimConfig",
    "SolutionTable",
    "TrainConfig",
    "classical_zero_value",
    "combine_barrier",
    "compute_initial_value",
    "estimate",
    "evaluate",
    "kappa",
    "phi_infinity_at_zero",
    "simulate_path",
    "solve_h",
    "solve_phi_infinity",
    "train",
]
