"""Second estimation step: structural parameters from first-step policies.

Two simulated criteria run in sequence. The Euler criterion recovers the
flow-utility curvatures and the discount factor from intertemporal marginal
utility comparisons; the probability criterion then recovers the additive
payoff parameters of the work choice by matching model-implied choice
probabilities to the first-step ones at a grid of moment states.
"""

from .euler import build_euler_draws, estimate_euler, euler_residuals, euler_sides
from .inputs import (
    EstimatedFirstStage,
    TrueFirstStage,
    first_stage_from_estimates,
    refine_for_moments,
)
from .moments import Moment, MomentSpec, default_moments
from .probability import (
    estimate_probability,
    model_ccp,
    probability_residuals,
    simulate_path_stats,
)
from .report import CriterionReport, theta_c_arrays

__all__ = [
    "CriterionReport",
    "EstimatedFirstStage",
    "Moment",
    "MomentSpec",
    "TrueFirstStage",
    "build_euler_draws",
    "default_moments",
    "estimate_euler",
    "estimate_probability",
    "euler_residuals",
    "euler_sides",
    "first_stage_from_estimates",
    "model_ccp",
    "probability_residuals",
    "refine_for_moments",
    "simulate_path_stats",
    "theta_c_arrays",
]
