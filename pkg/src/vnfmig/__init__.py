"""Recovery planning for failed virtual network functions.

A leader stage picks destination hosts (HMM/Viterbi decoding or a baseline),
and a follower stage splits idle link bandwidth between the migrating
functions and routes each function's state over it.
"""

from .cost import CostReport, congestion_cost, forwarding_cost, migration_time, total_cost
from .errors import PhaseError, PlanningError
from .experiments import ExperimentConfig, experiment_preset, run_experiment
from .feasibility import FeasibilityReport, validate_plan
from .follower import FollowerOptions, run_follower
from .leader import LeaderSolution, run_leader
from .lp import LinearProgram, LPResult, solve
from .network import Link, Network
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .plan import MigrationPlan
from .scenario import Agent, Scenario, load_scenario, make_scenario, save_scenario

__all__ = [
    "Agent",
    "CostReport",
    "ExperimentConfig",
    "FeasibilityReport",
    "FollowerOptions",
    "LPResult",
    "LeaderSolution",
    "LinearProgram",
    "Link",
    "MigrationPlan",
    "Network",
    "PhaseError",
    "PipelineConfig",
    "PipelineResult",
    "PlanningError",
    "Scenario",
    "congestion_cost",
    "experiment_preset",
    "forwarding_cost",
    "load_scenario",
    "make_scenario",
    "migration_time",
    "run_experiment",
    "run_follower",
    "run_leader",
    "run_pipeline",
    "save_scenario",
    "solve",
    "total_cost",
    "validate_plan",
]
