"""Simulation, identification, and two-step estimation of dynamic
simultaneous discrete-continuous choice models with unobserved types."""

from .params import ModelParams, ConfigError, read_config, write_config
from .model import (
    period_utility,
    marginal_utility,
    additive_payoff,
    budget_transition,
    retirement_value,
    logsum_ccp,
)
from .solver import SolverGrids, TruePolicy, solve_backward, solve_or_load
from .panel import (
    Panel,
    PanelTruth,
    simulate_panel,
    write_panel,
    read_panel,
    write_truth,
    read_truth,
    estimate_income_transition,
)

__all__ = [
    "ModelParams",
    "ConfigError",
    "read_config",
    "write_config",
    "period_utility",
    "marginal_utility",
    "additive_payoff",
    "budget_transition",
    "retirement_value",
    "logsum_ccp",
    "SolverGrids",
    "TruePolicy",
    "solve_backward",
    "solve_or_load",
    "Panel",
    "PanelTruth",
    "simulate_panel",
    "write_panel",
    "read_panel",
    "write_truth",
    "read_truth",
    "estimate_income_transition",
]

__version__ = "0.1.0"
