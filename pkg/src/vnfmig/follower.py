"""Bandwidth shares and load splits for fixed destinations.

Two phases: a joint LP picks per-agent link shares against estimated load
splits, then each agent solves its own min-max LP for the actual split.

Shares are stored in two units. ``beta`` (the plan) is a fraction of the
link's idle rate B^v; ``beta_tilde`` is a fraction of the adjusted residual
B'_v = max(B^v - B/10, 0). The two agree up to the factor B^v / B'_v, and
sum_f beta <= B'_v / B^v keeps the congestion pole out of reach.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import lp as lpcore
from .errors import (
    InfeasibleAllocationError,
    UnreachableDestinationError,
    ZeroCapacityError,
)
from .network import TOL, Network, Path
from .plan import ALPHA_EPS, MigrationPlan
from .scenario import Agent

FOLLOWER_ALGORITHMS = ("two-phase", "equal-split")
# weight floor for agents whose forwarding weight c_u R is zero
MIN_WEIGHT = 1e-6
# relative slack when an earlier LP optimum is turned into a constraint
LOCK_SLACK = 1e-9


def adjust_residuals(net: Network) -> np.ndarray:
    """B'_v per link: idle rate less a tenth of the nominal rate, floored at 0."""
    return np.maximum(net.idle_rates - net.nominal_rates / 10.0, 0.0)


def estimate_alpha(
    agent: Agent, destination: str, net: Network, max_hops: int | None = None,
    residual: np.ndarray | None = None,
) -> np.ndarray:
    """Capacity-weighted split over the enumerated S -> D paths.

    Each path carries a share proportional to its bottleneck under
    ``residual`` (B'_v by default). The result is a unit S -> D flow.
    """
    residual = adjust_residuals(net) if residual is None else residual
    paths = net.enumerate_paths(agent.failure_node, destination, max_hops)
    if not paths:
        raise UnreachableDestinationError(
            f"no path {agent.failure_node} -> {destination} within {max_hops} hops"
        )
    kappa = np.array([min(residual[e] for e in p.links) for p in paths])
    total = kappa.sum()
    if total <= TOL:
        raise ZeroCapacityError(f"every path {agent.failure_node} -> {destination} is saturated")
    row = np.zeros(len(net.links))
    for p, k in zip(paths, kappa):
        row[list(p.links)] += k
    return row / total


@dataclass
class FollowerOptions:
    strict_tat: bool = False
    # keep each agent's share vector balanced at transit nodes
    balance_shares: bool = True
    # among optimal allocations prefer the most even one
    fairness: bool = True
    # hand leftover capacity on used links to the agents using them
    spread: bool = False
    budget: int = lpcore.DEFAULT_BUDGET


@dataclass
class AllocationProblem:
    net: Network
    agents: tuple[Agent, ...]
    destinations: dict[str, str]
    residual: np.ndarray
    alpha_tilde: np.ndarray
    max_hops: int | None = None

    @classmethod
    def build(
        cls,
        net: Network,
        agents: Sequence[Agent],
        destinations: Mapping[str, str],
        max_hops: int | None = None,
    ) -> "AllocationProblem":
        residual = adjust_residuals(net)
        alpha = np.vstack(
            [estimate_alpha(a, destinations[a.id], net, max_hops, residual) for a in agents]
        ) if agents else np.zeros((0, len(net.links)))
        return cls(net, tuple(agents), dict(destinations), residual, alpha, max_hops)

    @property
    def share_cap(self) -> np.ndarray:
        """Largest total plan share per link, B'_v / B^v."""
        idle = self.net.idle_rates
        out = np.zeros_like(idle)
        pos = idle > 0
        out[pos] = self.residual[pos] / idle[pos]
        return out

    def weights(self) -> np.ndarray:
        return np.array([max(a.unit_forward_cost * a.in_rate, MIN_WEIGHT) for a in self.agents])

    def to_tilde(self, beta: np.ndarray) -> np.ndarray:
        out = np.zeros_like(beta)
        pos = self.residual > 0
        out[:, pos] = beta[:, pos] * self.net.idle_rates[pos] / self.residual[pos]
        return np.minimum(out, 1.0)


@dataclass
class LeaderStageResult:
    beta: np.ndarray
    beta_tilde: np.ndarray
    zeta: np.ndarray
    floor: float
    objective: float


@dataclass
class FollowerResult:
    plan: MigrationPlan
    tau: dict[str, float]
    zeta: dict[str, float]
    stage: LeaderStageResult | None
    algorithm: str
    notes: list[str] = field(default_factory=list)


# --------------------------------------------------------- follower-leader


class _Layout:
    """Column layout: zeta_f for each agent, then beta_fe on each support link."""

    def __init__(self, prob: AllocationProblem, extra: int):
        self.n_f = len(prob.agents)
        self.support = [np.flatnonzero(prob.alpha_tilde[i] > ALPHA_EPS) for i in range(self.n_f)]
        self.beta_col: dict[tuple[int, int], int] = {}
        col = self.n_f
        for i, links in enumerate(self.support):
            for e in links:
                self.beta_col[(i, int(e))] = col
                col += 1
        self.extra = list(range(col, col + extra))
        self.width = col + extra


def _base_rows(prob: AllocationProblem, lay: _Layout, balance: bool):
    net = prob.net
    V = np.array([a.state_size for a in prob.agents])
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for (i, e), col in lay.beta_col.items():
        r = np.zeros(lay.width)
        r[i] = V[i] * prob.alpha_tilde[i, e]
        r[col] = -net.idle_rates[e]
        ub_rows.append(r)
        ub_rhs.append(0.0)
    cap = prob.share_cap
    for e in sorted({e for (_, e) in lay.beta_col}):
        r = np.zeros(lay.width)
        for i in range(lay.n_f):
            col = lay.beta_col.get((i, e))
            if col is not None:
                r[col] = 1.0
        ub_rows.append(r)
        ub_rhs.append(cap[e])
    if balance:
        for i, a in enumerate(prob.agents):
            ends = {a.failure_node, prob.destinations[a.id]}
            touched: dict[str, dict[int, float]] = {}
            for e in lay.support[i]:
                link = net.links[e]
                touched.setdefault(link.dst, {})[lay.beta_col[(i, int(e))]] = 1.0
                touched.setdefault(link.src, {})[lay.beta_col[(i, int(e))]] = -1.0
            for node in sorted(touched):
                if node in ends:
                    continue
                r = np.zeros(lay.width)
                for col, v in touched[node].items():
                    r[col] += v
                eq_rows.append(r)
                eq_rhs.append(0.0)
    return ub_rows, ub_rhs, eq_rows, eq_rhs


def _solve(c, ub_rows, ub_rhs, eq_rows, eq_rhs, width: int, budget: int) -> lpcore.LPResult:
    prog = lpcore.LinearProgram(
        c,
        np.array(ub_rows).reshape(-1, width),
        np.array(ub_rhs, dtype=float),
        np.array(eq_rows).reshape(-1, width),
        np.array(eq_rhs, dtype=float),
    )
    return lpcore.solve(prog, budget)


def solve_follower_leader(prob: AllocationProblem, options: FollowerOptions = FollowerOptions()) -> LeaderStageResult:
    """Joint share allocation maximizing sum_f zeta_f / (c_u R).

    Stages, each locking the previous optimum:
      1. the largest floor lam <= 1 such that zeta_f >= lam / T(f) for all f
         (lam must be positive, and 1 in strict mode);
      2. the weighted objective;
      3. (fairness) max-min of zeta_f relative to the agent's solo optimum;
      4. (spread) maximal total share on the links already in use.
    """
    n_f = len(prob.agents)
    if n_f == 0:
        z = np.zeros((0, len(prob.net.links)))
        return LeaderStageResult(z, z.copy(), np.zeros(0), 1.0, 0.0)
    T = np.array([a.tat for a in prob.agents])
    V = np.array([a.state_size for a in prob.agents])
    w = prob.weights()
    budget = options.budget

    # stage 1: floor
    lay = _Layout(prob, extra=1)
    lam = lay.extra[0]
    ub, ubr, eq, eqr = _base_rows(prob, lay, options.balance_shares)
    floor_rows = []
    for i in range(n_f):
        r = np.zeros(lay.width)
        r[lam] = 1.0 / T[i]
        r[i] = -1.0
        floor_rows.append(r)
    r = np.zeros(lay.width)
    r[lam] = 1.0
    c = np.zeros(lay.width)
    c[lam] = 1.0
    res = _solve(c, ub + floor_rows + [r], ubr + [0.0] * n_f + [1.0], eq, eqr, lay.width, budget)
    if not res.optimal or res.objective <= TOL:
        raise InfeasibleAllocationError("some agent cannot obtain any bandwidth on its paths")
    floor = min(res.objective, 1.0)
    if options.strict_tat and floor < 1.0 - 1e-9:
        raise InfeasibleAllocationError(
            f"deadlines cannot all be met (best common fraction {floor:.6g})"
        )

    # stage 2: objective, floors fixed at lam * (1 - slack)
    lay = _Layout(prob, extra=0)
    ub, ubr, eq, eqr = _base_rows(prob, lay, options.balance_shares)
    for i in range(n_f):
        r = np.zeros(lay.width)
        r[i] = -1.0
        ub.append(r)
        ubr.append(-floor * (1.0 - LOCK_SLACK) / T[i])
    c = np.zeros(lay.width)
    c[:n_f] = 1.0 / w
    res = _solve(c, ub, ubr, eq, eqr, lay.width, budget)
    if not res.optimal:
        raise InfeasibleAllocationError(f"share allocation LP is {res.status.value}")
    best = res.objective
    x = res.x
    ub.append(-c)
    ubr.append(-(best - LOCK_SLACK * max(1.0, abs(best))))

    if options.fairness and n_f > 1:
        # stage 3: zeta_f >= mu * solo_f, maximize mu
        solo = np.array(
            [
                min(prob.residual[e] / (V[i] * prob.alpha_tilde[i, e]) for e in lay.support[i])
                for i in range(n_f)
            ]
        )
        width = lay.width + 1
        mu = lay.width
        pad = lambda rows: [np.append(r, 0.0) for r in rows]  # noqa: E731
        ub3, eq3 = pad(ub), pad(eq)
        for i in range(n_f):
            r = np.zeros(width)
            r[mu] = solo[i]
            r[i] = -1.0
            ub3.append(r)
        c3 = np.zeros(width)
        c3[mu] = 1.0
        res3 = _solve(c3, ub3, ubr + [0.0] * n_f, eq3, eqr, width, budget)
        if res3.optimal:
            x = res3.x[: lay.width]
            mu_val = res3.x[mu]
            for i in range(n_f):
                r = np.zeros(lay.width)
                r[i] = -1.0
                ub.append(r)
                ubr.append(-mu_val * solo[i] * (1.0 - LOCK_SLACK))

    if options.spread:
        c4 = np.zeros(lay.width)
        c4[n_f:] = 1.0
        res4 = _solve(c4, ub, ubr, eq, eqr, lay.width, budget)
        if res4.optimal:
            x = res4.x

    beta = np.zeros((n_f, len(prob.net.links)))
    for (i, e), col in lay.beta_col.items():
        beta[i, e] = x[col]
    beta = np.minimum(beta, prob.share_cap)
    zeta = x[:n_f].copy()
    return LeaderStageResult(beta, prob.to_tilde(beta), zeta, floor, float(c @ x))


# ------------------------------------------------------- follower-follower


def solve_follower_follower(
    agent: Agent,
    destination: str,
    rates: np.ndarray,
    net: Network,
    budget: int = lpcore.DEFAULT_BUDGET,
) -> tuple[np.ndarray, float]:
    """Min-max split of one agent's state over links with positive ``rates``.

    ``rates[e]`` is the absolute rate granted on link e (B'_v beta_tilde, or
    equivalently B^v beta). Returns the alpha row and tau(f).
    """
    links = np.flatnonzero(rates > TOL)
    if links.size == 0:
        raise InfeasibleAllocationError(f"agent {agent.id} has no bandwidth")
    k = links.size
    width = k + 1  # alpha on each link, then tau
    V = agent.state_size
    ub = np.zeros((2 * k, width))
    ubr = np.zeros(2 * k)
    ub[np.arange(k), np.arange(k)] = V
    ub[np.arange(k), k] = -rates[links]
    ub[k + np.arange(k), np.arange(k)] = 1.0
    ubr[k:] = 1.0
    nodes = sorted({net.links[e].src for e in links} | {net.links[e].dst for e in links})
    if agent.failure_node not in nodes or destination not in nodes:
        raise InfeasibleAllocationError(f"agent {agent.id} has no bandwidth out of its source")
    pos = {n: j for j, n in enumerate(nodes)}
    eq = np.zeros((len(nodes), width))
    for j, e in enumerate(links):
        eq[pos[net.links[e].dst], j] += 1.0
        eq[pos[net.links[e].src], j] -= 1.0
    eqr = np.zeros(len(nodes))
    eqr[pos[destination]] = 1.0
    eqr[pos[agent.failure_node]] = -1.0
    c = np.zeros(width)
    c[k] = -1.0
    res = lpcore.solve(lpcore.LinearProgram(c, ub, ubr, eq, eqr), budget)
    if not res.optimal:
        raise InfeasibleAllocationError(
            f"agent {agent.id}: granted links do not connect {agent.failure_node} to {destination}"
        )
    alpha = np.zeros(len(net.links))
    vals = np.clip(res.x[:k], 0.0, 1.0)
    vals[vals < ALPHA_EPS] = 0.0
    alpha[links] = vals
    used = alpha > 0
    tau = float(np.max(V * alpha[used] / rates[used]))
    return alpha, tau


# ---------------------------------------------------------------- drivers


def _plan(
    prob: AllocationProblem,
    alpha: np.ndarray,
    beta: np.ndarray,
    chain_paths: Mapping[str, tuple[Path, Path]] | None,
) -> MigrationPlan:
    return MigrationPlan(
        tuple(a.id for a in prob.agents),
        dict(prob.destinations),
        alpha,
        beta,
        dict(chain_paths or {}),
    )


def two_phase_follower(
    prob: AllocationProblem,
    options: FollowerOptions = FollowerOptions(),
    chain_paths: Mapping[str, tuple[Path, Path]] | None = None,
) -> FollowerResult:
    stage = solve_follower_leader(prob, options)
    alpha = np.zeros_like(stage.beta)
    tau: dict[str, float] = {}
    for i, a in enumerate(prob.agents):
        rates = prob.net.idle_rates * stage.beta[i]
        alpha[i], tau[a.id] = solve_follower_follower(
            a, prob.destinations[a.id], rates, prob.net, options.budget
        )
    zeta = {a: 1.0 / t for a, t in tau.items()}
    return FollowerResult(_plan(prob, alpha, stage.beta, chain_paths), tau, zeta, stage, "two-phase")


def equal_split_follower(
    prob: AllocationProblem,
    chain_paths: Mapping[str, tuple[Path, Path]] | None = None,
) -> FollowerResult:
    """Baseline: every link's spare share is divided evenly among the agents
    whose estimated split uses it; each agent keeps the estimated split."""
    cap = prob.share_cap
    users = (prob.alpha_tilde > ALPHA_EPS).sum(axis=0)
    beta = np.zeros_like(prob.alpha_tilde)
    tau: dict[str, float] = {}
    for i, a in enumerate(prob.agents):
        supp = np.flatnonzero(prob.alpha_tilde[i] > ALPHA_EPS)
        scale = min(cap[e] / users[e] / prob.alpha_tilde[i, e] for e in supp)
        if scale <= TOL:
            raise InfeasibleAllocationError(f"agent {a.id} has a saturated link on every path")
        beta[i, supp] = scale * prob.alpha_tilde[i, supp]
        rates = prob.net.idle_rates[supp] * beta[i, supp]
        tau[a.id] = float(np.max(a.state_size * prob.alpha_tilde[i, supp] / rates))
    beta = np.minimum(beta, cap)
    alpha = prob.alpha_tilde.copy()
    zeta = {a: 1.0 / t for a, t in tau.items()}
    return FollowerResult(_plan(prob, alpha, beta, chain_paths), tau, zeta, None, "equal-split")


def run_follower(
    prob: AllocationProblem,
    algorithm: str = "two-phase",
    options: FollowerOptions = FollowerOptions(),
    chain_paths: Mapping[str, tuple[Path, Path]] | None = None,
) -> FollowerResult:
    if algorithm == "two-phase":
        return two_phase_follower(prob, options, chain_paths)
    if algorithm == "equal-split":
        return equal_split_follower(prob, chain_paths)
    raise ValueError(f"unknown follower algorithm {algorithm!r}")


def follower_cost(agents: Sequence[Agent], plan: MigrationPlan, net: Network) -> tuple[float, float]:
    """(sum_f c_u R tau_f, sum_f tau_f) with tau from the plan itself."""
    from .cost import migration_time

    taus = [migration_time(a, plan, net) for a in agents]
    weighted = sum(a.unit_forward_cost * a.in_rate * t for a, t in zip(agents, taus))
    return float(weighted), float(sum(taus))
