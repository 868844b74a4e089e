"""Augmented-Lagrangian differential dynamic programming on matrix Lie groups."""

from .constraints import ConfigAvoidance, InputBound, MultiplierState, VelocityBound
from .dynamics import RigidBodyParams, RigidBodySE3, State, Trajectory, rollout
from .harness import MonteCarloStats, NoiseModel, monte_carlo, stochastic_rollout
from .liegroup import SE3, SO3
from .scenario import Scenario, load_scenario
from .solver import CostWeights, Problem, SolverConfig, SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigAvoidance",
    "CostWeights",
    "InputBound",
    "MonteCarloStats",
    "MultiplierState",
    "NoiseModel",
    "Problem",
    "RigidBodyParams",
    "RigidBodySE3",
    "SE3",
    "SO3",
    "Scenario",
    "SolveResult",
    "SolverConfig",
    "State",
    "Trajectory",
    "VelocityBound",
    "load_scenario",
    "monte_carlo",
    "rollout",
    "solve",
    "stochastic_rollout",
]
