"""Migration time, forwarding and congestion cost of a plan."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyPlanError, InfeasibleShareError, UnboundedCongestionError
from .feasibility import FeasibilityReport, validate_plan
from .network import TOL, Network
from .plan import ALPHA_EPS, MigrationPlan
from .scenario import Agent, CostWeights

CSV_COLUMNS = (
    "scenario",
    "seed",
    "algorithm",
    "forwarding",
    "congestion",
    "total",
    "max_time",
    "feasible",
)


def migration_time(agent: Agent, plan: MigrationPlan, net: Network) -> float:
    """Longest per-link discharge time V(f) alpha / (B^v beta)."""
    i = plan.row(agent.id)
    alpha, beta = plan.alpha[i], plan.beta[i]
    used = np.flatnonzero(alpha > ALPHA_EPS)
    if used.size == 0:
        raise EmptyPlanError(f"agent {agent.id} ships no state")
    rates = net.idle_rates[used] * beta[used]
    if np.any(rates <= 0):
        e = int(used[np.argmin(rates)])
        link = net.links[e]
        raise InfeasibleShareError(
            f"agent {agent.id} routes load over {link.src}->{link.dst} with no allocated rate"
        )
    return float(np.max(agent.state_size * alpha[used] / rates))


def forwarding_cost(
    agents: Sequence[Agent], plan: MigrationPlan, net: Network
) -> float:
    return float(
        sum(a.unit_forward_cost * migration_time(a, plan, net) * a.in_rate for a in agents)
    )


def congestion_cost(
    plan: MigrationPlan, net: Network, queue_costs: Sequence[float] | None = None
) -> float:
    """Queue cost sum_e c_b B / (B^v (1 - sum_f beta_fe)) over every link."""
    c_b = np.ones(len(net.links)) if queue_costs is None else np.asarray(queue_costs, dtype=float)
    share = plan.beta.sum(axis=0) if plan.beta.size else np.zeros(len(net.links))
    total = 0.0
    for e, link in enumerate(net.links):
        if c_b[e] == 0:
            continue
        remaining = net.idle_rates[e] * (1.0 - share[e])
        if remaining <= TOL * link.nominal_rate:
            raise UnboundedCongestionError(
                f"link {link.src}->{link.dst} has no idle rate left (share {share[e]:.6g})"
            )
        total += c_b[e] * link.nominal_rate / remaining
    return float(total)


@dataclass
class CostReport:
    migration_times: dict[str, float]
    forwarding: float
    congestion: float
    total: float
    feasibility: FeasibilityReport
    strict_tat: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def max_time(self) -> float:
        return max(self.migration_times.values(), default=0.0)

    @property
    def feasible(self) -> bool:
        if self.strict_tat:
            return self.feasibility.passed
        return self.feasibility.passed_except("tat")

    def csv_row(self, scenario: str, seed: int | None, algorithm: str) -> dict[str, object]:
        return {
            "scenario": scenario,
            "seed": "" if seed is None else seed,
            "algorithm": algorithm,
            "forwarding": self.forwarding,
            "congestion": self.congestion,
            "total": self.total,
            "max_time": self.max_time,
            "feasible": int(self.feasible),
        }


def total_cost(
    agents: Sequence[Agent],
    plan: MigrationPlan,
    net: Network,
    weights: CostWeights = CostWeights(),
    queue_costs: Sequence[float] | None = None,
    strict_tat: bool = False,
) -> CostReport:
    """Weighted forwarding + congestion cost together with the feasibility report."""
    times = {a.id: migration_time(a, plan, net) for a in agents}
    fwd = float(sum(a.unit_forward_cost * times[a.id] * a.in_rate for a in agents))
    notes = []
    try:
        cong = congestion_cost(plan, net, queue_costs)
    except UnboundedCongestionError as exc:
        cong = math.inf
        notes.append(str(exc))
    total = 0.0
    if weights.forwarding:
        total += weights.forwarding * fwd
    if weights.congestion:
        total += weights.congestion * cong
    report = validate_plan(agents, plan, net)
    return CostReport(times, fwd, cong, total, report, strict_tat, notes)
