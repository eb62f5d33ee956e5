"""Randomised exploration for linear bandits on smooth, strongly convex action sets."""
from .agents import AgentConfig, AgentState
from .env import BanditInstance, TrialTrace, run_trial, run_trials
from .geometry import Finite, L2Ball, LqBall, Transformed
from .perturb import PerturbationSpec

__all__ = [
    "AgentConfig", "AgentState", "BanditInstance", "TrialTrace", "run_trial", "run_trials",
    "Finite", "L2Ball", "LqBall", "Transformed", "PerturbationSpec",
]
__version__ = "0.1.0"
