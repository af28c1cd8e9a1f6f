"""Constraint checks for a candidate migration plan.

Each check returns a :class:`CheckResult` listing offending indices instead of
raising, so one report can enumerate every violation at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IncompletePlanError, InfeasibleShareError
from .network import TOL, Network, path_traverses
from .plan import ALPHA_EPS, MigrationPlan
from .scenario import Agent

SECTIONS = (
    "alpha_conservation",
    "beta_conservation",
    "chain_capacity",
    "node_capacity",
    "link_share",
    "tat",
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    violations: list[tuple[object, float]] = field(default_factory=list)
    residuals: dict[str, float] = field(default_factory=dict)
    note: str = ""


@dataclass
class FeasibilityReport:
    sections: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.sections.values())

    def passed_except(self, *names: str) -> bool:
        return all(s.passed for n, s in self.sections.items() if n not in names)

    @property
    def failing(self) -> list[str]:
        return [n for n in SECTIONS if n in self.sections and not self.sections[n].passed]

    def summary(self) -> str:
        lines = []
        for name in SECTIONS:
            s = self.sections.get(name)
            if s is None:
                continue
            mark = "ok  " if s.passed else "FAIL"
            detail = "" if s.passed else f" {s.violations[:5]}{' ' + s.note if s.note else ''}"
            lines.append(f"{mark} {name}{detail}")
        return "\n".join(lines)


def _merge(name: str, parts: Sequence[CheckResult]) -> CheckResult:
    out = CheckResult(name, all(p.passed for p in parts))
    for p in parts:
        out.violations.extend(p.violations)
        if p.note:
            out.note = (out.note + "; " + p.note).strip("; ")
    return out


def check_alpha_conservation(agent: Agent, plan: MigrationPlan, net: Network) -> CheckResult:
    """Net alpha inflow is +1 at the destination, -1 at the source, 0 elsewhere."""
    row = plan.alpha[plan.row(agent.id)]
    net_in = net.incidence_matrix() @ row
    target = np.zeros(len(net.nodes))
    target[net.index_of(plan.destinations[agent.id])] += 1.0
    target[net.index_of(agent.failure_node)] -= 1.0
    resid = net_in - target
    bad = np.flatnonzero(np.abs(resid) > TOL)
    return CheckResult(
        "alpha_conservation",
        bad.size == 0,
        [((agent.id, net.nodes[i].id), float(resid[i])) for i in bad],
        {n.id: float(r) for n, r in zip(net.nodes, resid)},
    )


def check_beta_conservation(agent: Agent, plan: MigrationPlan, net: Network) -> CheckResult:
    """Net share inflow is positive at D(f), negative at S(f), zero elsewhere."""
    row = plan.beta[plan.row(agent.id)]
    net_in = net.incidence_matrix() @ row
    d = net.index_of(plan.destinations[agent.id])
    s = net.index_of(agent.failure_node)
    violations = []
    for i, v in enumerate(net_in):
        if i == d:
            ok = v > TOL
        elif i == s:
            ok = v < -TOL
        else:
            ok = abs(v) <= TOL
        if not ok:
            violations.append(((agent.id, net.nodes[i].id), float(v)))
    return CheckResult("beta_conservation", not violations, violations)


def chain_load(agents: Sequence[Agent], plan: MigrationPlan, net: Network) -> np.ndarray:
    load = np.zeros(len(net.links))
    for a in agents:
        if a.id not in plan.chain_paths:
            raise IncompletePlanError(f"no chain reconnection paths for agent {a.id}")
        rho_in, rho_out = plan.chain_paths[a.id]
        for e in rho_out.links:
            load[e] += path_traverses(e, rho_out) * a.out_rate
        for e in rho_in.links:
            load[e] += path_traverses(e, rho_in) * a.in_rate
    return load


def check_chain_establishment(
    agents: Sequence[Agent], plan: MigrationPlan, net: Network
) -> CheckResult:
    """Reconnected chain rates fit into each link's idle rate."""
    load = chain_load(agents, plan, net)
    bad = np.flatnonzero(load > net.idle_rates + TOL)
    violations = [((net.links[e].src, net.links[e].dst), float(load[e])) for e in bad]
    note = ""
    for a in agents:
        rho_in, rho_out = plan.chain_paths[a.id]
        d = plan.destinations[a.id]
        want_in = (a.prev_hop if a.prev_hop is not None else d, d)
        want_out = (d, a.next_hop if a.next_hop is not None else d)
        if (rho_in.src, rho_in.dst) != want_in or (rho_out.src, rho_out.dst) != want_out:
            violations.append((a.id, float("nan")))
            note = "chain path endpoints do not match prev_hop -> D -> next_hop"
    return CheckResult("chain_capacity", not violations, violations, note=note)


def check_node_capacity(
    agents: Sequence[Agent], plan: MigrationPlan, net: Network
) -> CheckResult:
    demand = np.zeros(len(net.nodes))
    for a in agents:
        demand[net.index_of(plan.destinations[a.id])] += a.compute_demand
    bad = np.flatnonzero(demand > net.compute + TOL)
    return CheckResult(
        "node_capacity", bad.size == 0, [(net.nodes[i].id, float(demand[i])) for i in bad]
    )


def check_link_share(plan: MigrationPlan, net: Network) -> CheckResult:
    total = plan.beta.sum(axis=0) if plan.beta.size else np.zeros(len(net.links))
    bad = np.flatnonzero(total > 1.0 + TOL)
    return CheckResult(
        "link_share",
        bad.size == 0,
        [((net.links[e].src, net.links[e].dst), float(total[e])) for e in bad],
    )


def check_tat(agents: Sequence[Agent], plan: MigrationPlan, net: Network) -> CheckResult:
    from .cost import migration_time

    violations = []
    for a in agents:
        t = migration_time(a, plan, net)
        if t > a.tat + TOL:
            violations.append((a.id, t))
    return CheckResult("tat", not violations, violations)


def check_destinations(agents: Sequence[Agent], plan: MigrationPlan, net: Network) -> None:
    for a in agents:
        net.index_of(plan.destinations[a.id])


def validate_plan(agents: Sequence[Agent], plan: MigrationPlan, net: Network) -> FeasibilityReport:
    """Run all six constraint families; an all-zero alpha row raises EmptyPlanError."""
    check_destinations(agents, plan, net)
    try:
        tat = check_tat(agents, plan, net)
    except InfeasibleShareError as exc:
        tat = CheckResult("tat", False, note=str(exc))
    sections = {
        "alpha_conservation": _merge(
            "alpha_conservation", [check_alpha_conservation(a, plan, net) for a in agents]
        ),
        "beta_conservation": _merge(
            "beta_conservation", [check_beta_conservation(a, plan, net) for a in agents]
        ),
        "chain_capacity": check_chain_establishment(agents, plan, net),
        "node_capacity": check_node_capacity(agents, plan, net),
        "link_share": check_link_share(plan, net),
        "tat": tat,
    }
    # alpha > 0 must come with beta > 0 on the same link
    share_gaps = [
        (a.id, net.links[e].src + "->" + net.links[e].dst)
        for a in agents
        for e in np.flatnonzero(
            (plan.alpha[plan.row(a.id)] > ALPHA_EPS) & (plan.beta[plan.row(a.id)] <= 0)
        )
    ]
    if share_gaps:
        sec = sections["beta_conservation"]
        sec.passed = False
        sec.violations.extend((g, 0.0) for g in share_gaps)
        sec.note = "load routed over links without a bandwidth share"
    return FeasibilityReport(sections)
