"""leader -> follower-leader -> follower-follower, then cost and validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .cost import CostReport, total_cost
from .errors import PhaseError, PlanningError
from .follower import (
    AllocationProblem,
    FollowerOptions,
    FollowerResult,
    equal_split_follower,
    solve_follower_follower,
    solve_follower_leader,
)
from .leader import DEFAULT_EXHAUSTIVE_BUDGET, LeaderSolution, run_leader
from .plan import MigrationPlan
from .scenario import Scenario

import numpy as np

DEFAULT_R_FOLD = 0.1


@dataclass
class PipelineConfig:
    leader: str = "viterbi"
    follower: str = "two-phase"
    strict_tat: bool = False
    r_fold: float = DEFAULT_R_FOLD
    # seed of the random leader only
    seed: int = 0
    exhaustive_budget: int = DEFAULT_EXHAUSTIVE_BUDGET
    options: FollowerOptions = field(default_factory=FollowerOptions)

    @property
    def algorithm(self) -> str:
        return f"{self.leader}+{self.follower}"

    def to_dict(self) -> dict:
        data = asdict(self)
        data["options"]["strict_tat"] = self.strict_tat
        return data


@dataclass
class PipelineResult:
    scenario: Scenario  # with retransfer folded in
    config: PipelineConfig
    leader: LeaderSolution
    follower: FollowerResult
    report: CostReport

    @property
    def plan(self) -> MigrationPlan:
        return self.follower.plan

    def to_dict(self) -> dict:
        net = self.scenario.network
        rep = self.report
        return {
            "config": self.config.to_dict(),
            "scenario": self.scenario.to_dict(),
            "leader": self.leader.to_dict(),
            "plan": self.plan.to_dict(net),
            "tau": dict(sorted(self.follower.tau.items())),
            "cost": {
                "forwarding": rep.forwarding,
                "congestion": rep.congestion,
                "total": rep.total,
                "max_time": rep.max_time,
                "migration_times": dict(sorted(rep.migration_times.items())),
            },
            "feasible": rep.feasible,
            "checks": {name: sec.passed for name, sec in rep.feasibility.sections.items()},
            "tat_violations": sorted(
                a.id for a in self.scenario.agents if rep.migration_times[a.id] > a.tat + 1e-9
            ),
            "notes": list(rep.notes) + list(self.follower.notes),
        }


def _phase(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PlanningError as exc:
        raise PhaseError(name, exc) from exc


def _two_phase(prob: AllocationProblem, options: FollowerOptions, chain_paths) -> FollowerResult:
    stage = _phase("follower-leader", solve_follower_leader, prob, options)
    alpha = np.zeros_like(stage.beta)
    tau: dict[str, float] = {}
    for i, a in enumerate(prob.agents):
        rates = prob.net.idle_rates * stage.beta[i]
        alpha[i], tau[a.id] = _phase(
            "follower-follower",
            solve_follower_follower,
            a,
            prob.destinations[a.id],
            rates,
            prob.net,
            options.budget,
        )
    plan = MigrationPlan(
        tuple(a.id for a in prob.agents), dict(prob.destinations), alpha, stage.beta, dict(chain_paths)
    )
    return FollowerResult(plan, tau, {k: 1.0 / t for k, t in tau.items()}, stage, "two-phase")


def run_pipeline(scenario: Scenario, config: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Plan migrations for every failed agent of ``scenario``.

    Errors inside a phase come out as :class:`PhaseError` carrying the phase
    name. A plan that fails validation is still returned, flagged infeasible.
    """
    sc = scenario.folded(config.r_fold)
    net = sc.network
    leader = _phase(
        "leader", run_leader, sc, config.leader, seed=config.seed, budget=config.exhaustive_budget
    )
    prob = _phase(
        "follower-leader", AllocationProblem.build, net, sc.agents, leader.destinations, sc.hop_bound
    )
    options = FollowerOptions(**{**asdict(config.options), "strict_tat": config.strict_tat})
    if config.follower == "two-phase":
        follower = _two_phase(prob, options, leader.chain_paths)
    elif config.follower == "equal-split":
        follower = _phase("follower-leader", equal_split_follower, prob, leader.chain_paths)
    else:
        raise ValueError(f"unknown follower algorithm {config.follower!r}")
    report = _phase(
        "validate",
        total_cost,
        sc.agents,
        follower.plan,
        net,
        sc.cost_weights,
        sc.queue_costs,
        config.strict_tat,
    )
    return PipelineResult(sc, config, leader, follower, report)
