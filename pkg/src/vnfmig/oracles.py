"""Exact references for small instances.

``brute_force_follower`` grids the bandwidth shares of at most two agents;
``joint_oracle`` enumerates destinations and solves the remaining convex
allocation problem exactly with cvxpy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import cvxpy as cp
import numpy as np

from .errors import InvalidParameterError, NoCandidateError, OracleTooLargeError
from .follower import MIN_WEIGHT, adjust_residuals
from .network import TOL, Network
from .resources import ResourcePool
from .scenario import Agent, Scenario

GRID_STEPS = (0.05, 0.1)
DEFAULT_GRID_BUDGET = 5_000_000
MAX_ORACLE_AGENTS = 2
MAX_ORACLE_LINKS = 6


@dataclass
class GridResult:
    cost: float
    beta: np.ndarray
    tau: dict[str, float]
    evaluated: int


def _useful_links(net: Network, src: str, dst: str, cap: np.ndarray) -> np.ndarray:
    """Links lying on some src -> dst walk through positive-capacity links."""
    usable = cap > TOL
    fwd = net.bfs_tree(src, usable)
    back = net.bfs_tree(dst, usable, reverse=True)
    return np.array(
        [usable[e] and l.src in fwd and l.dst in back for e, l in enumerate(net.links)], dtype=bool
    )


def _cut_matrix(net: Network, src: str, dst: str) -> np.ndarray:
    """Rows are the src/dst cuts; entry 1 when the link crosses the cut forwards."""
    others = [n for n in net.node_ids if n not in (src, dst)]
    heads = np.array([net.index_of(l.dst) for l in net.links])
    tails = np.array([net.index_of(l.src) for l in net.links])
    rows = []
    for r in range(len(others) + 1):
        for side in itertools.combinations(others, r):
            inside = np.zeros(len(net.nodes), dtype=bool)
            inside[[net.index_of(n) for n in side + (src,)]] = True
            rows.append(inside[tails] & ~inside[heads])
    return np.array(rows, dtype=float)


def _grid(cap: float, step: float) -> np.ndarray:
    values = np.arange(0.0, cap + 1e-12, step)
    if cap - values[-1] > 1e-12:
        values = np.append(values, cap)
    return values


def _rref(A: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns (entries here are 0/+-1)."""
    R = A.astype(float).copy()
    pivots: list[int] = []
    row = 0
    for col in range(R.shape[1]):
        if row == R.shape[0]:
            break
        k = row + int(np.argmax(np.abs(R[row:, col])))
        if abs(R[k, col]) < 1e-12:
            continue
        R[[row, k]] = R[[k, row]]
        R[row] /= R[row, col]
        for r in range(R.shape[0]):
            if r != row:
                R[r] -= R[r, col] * R[row]
        pivots.append(col)
        row += 1
    return R[:row], pivots


def _agent_grid(
    net: Network, agent: Agent, destination: str, cap: np.ndarray, step: float, budget: int
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced share vectors of one agent on a grid, with their max-flow values.

    Shares live on the links that can carry S -> D flow. Balance at transit
    nodes pins some shares as combinations of the others; the free ones are
    gridded and points whose pinned shares leave [0, cap] are dropped.
    """
    useful = np.flatnonzero(_useful_links(net, agent.failure_node, destination, cap))
    n_e = len(net.links)
    if useful.size == 0:
        return np.zeros((1, n_e)), np.zeros(1)
    ends = {agent.failure_node, destination}
    inc = net.incidence_matrix()[:, useful]
    transit = [i for i, n in enumerate(net.node_ids) if n not in ends and np.any(inc[i])]
    R, pivots = _rref(inc[transit]) if transit else (np.zeros((0, useful.size)), [])
    free = [j for j in range(useful.size) if j not in pivots]
    grids = [_grid(cap[useful[j]], step) for j in free]
    size = int(np.prod([g.size for g in grids])) if grids else 1
    if size > budget:
        raise OracleTooLargeError(f"{size} grid points for agent {agent.id} exceed {budget}")
    if grids:
        mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, len(free))
    else:
        mesh = np.zeros((1, 0))
    local = np.zeros((mesh.shape[0], useful.size))
    local[:, free] = mesh
    if pivots:
        local[:, pivots] = -mesh @ R[:, free].T
    lo = local >= -1e-12
    hi = local <= cap[useful] + 1e-12
    keep = np.all(lo & hi, axis=1)
    local = np.clip(local[keep], 0.0, cap[useful])
    betas = np.zeros((local.shape[0], n_e))
    betas[:, useful] = local
    cuts = _cut_matrix(net, agent.failure_node, destination)
    phi = ((betas * net.idle_rates) @ cuts.T).min(axis=1)
    return betas, phi


def _combine(per_agent, costs, cap: np.ndarray, budget: int) -> tuple[float, list[int], int]:
    """Best pair of share vectors whose sum fits under ``cap``.

    Agent 1 points are visited in increasing cost; for each, the cheapest
    agent 2 point that fits is the first fitting one in cost order. The scan
    stops once agent 1's cost plus agent 2's overall minimum cannot beat the
    best pair found.
    """
    (b0, _), (b1, _) = per_agent
    c0, c1 = costs
    ok0 = np.flatnonzero(np.isfinite(c0))
    ok1 = np.flatnonzero(np.isfinite(c1))
    if ok0.size == 0 or ok1.size == 0:
        return math.inf, [0, 0], 0
    ok0 = ok0[np.argsort(c0[ok0], kind="stable")]
    ok1 = ok1[np.argsort(c1[ok1], kind="stable")]
    shared = np.flatnonzero(b0.any(axis=0) & b1.any(axis=0))
    if shared.size == 0:
        return float(c0[ok0[0]] + c1[ok1[0]]), [int(ok0[0]), int(ok1[0])], 1
    s1 = b1[ok1][:, shared]
    c1_sorted = c1[ok1]
    limit = cap[shared] + 1e-12
    best, pick, evaluated = math.inf, [0, 0], 0
    chunk = max(1, 4_000_000 // (ok1.size * shared.size))
    for start in range(0, ok0.size, chunk):
        rows = ok0[start : start + chunk]
        if c0[rows[0]] + c1_sorted[0] >= best:
            break
        evaluated += rows.size * ok1.size
        if evaluated > budget * 1000:
            raise OracleTooLargeError("share pair search exceeds the budget")
        fits = np.all(b0[rows][:, None, shared] + s1[None, :, :] <= limit, axis=2)
        any_fit = fits.any(axis=1)
        first = np.argmax(fits, axis=1)
        value = np.where(any_fit, c0[rows] + c1_sorted[first], math.inf)
        k = int(np.argmin(value))
        if value[k] < best:
            best = float(value[k])
            pick = [int(rows[k]), int(ok1[first[k]])]
    return best, pick, evaluated


def brute_force_follower(
    agents: Sequence[Agent],
    destinations: Mapping[str, str],
    net: Network,
    grid_step: float = 0.05,
    budget: int = DEFAULT_GRID_BUDGET,
) -> GridResult:
    """Minimum of sum_f c_u R tau_f over gridded shares.

    Shares are plan units (fractions of B^v) capped at B'_v / B^v per link and
    balanced at each agent's transit nodes. For fixed shares the best split
    gives tau_f = V(f) / maxflow_f, the smallest S/D cut.
    """
    if len(agents) > MAX_ORACLE_AGENTS or len(net.links) > MAX_ORACLE_LINKS:
        raise OracleTooLargeError(
            f"grid oracle handles <= {MAX_ORACLE_AGENTS} agents and <= {MAX_ORACLE_LINKS} links"
        )
    if not any(abs(grid_step - s) < 1e-12 for s in GRID_STEPS):
        raise InvalidParameterError(f"grid_step must be one of {GRID_STEPS}")
    idle = net.idle_rates
    residual = adjust_residuals(net)
    cap = np.zeros_like(idle)
    cap[idle > 0] = residual[idle > 0] / idle[idle > 0]
    w = np.array([max(a.unit_forward_cost * a.in_rate, MIN_WEIGHT) * a.state_size for a in agents])

    per_agent = [_agent_grid(net, a, destinations[a.id], cap, grid_step, budget) for a in agents]
    costs = []
    for i, (_, phi) in enumerate(per_agent):
        with np.errstate(divide="ignore"):
            costs.append(np.where(phi > TOL, w[i] / np.maximum(phi, TOL), math.inf))

    if len(agents) == 1:
        best = int(np.argmin(costs[0]))
        pick, total, evaluated = [best], float(costs[0][best]), costs[0].size
    else:
        total, pick, evaluated = _combine(per_agent, costs, cap, budget)
    beta = np.vstack([per_agent[i][0][pick[i]] for i in range(len(agents))])
    tau = {}
    for i, a in enumerate(agents):
        phi = per_agent[i][1][pick[i]]
        tau[a.id] = a.state_size / phi if phi > TOL else math.inf
    return GridResult(total, beta, tau, evaluated)


def convex_follower(
    agents: Sequence[Agent], destinations: Mapping[str, str], net: Network
) -> tuple[float, np.ndarray]:
    """Continuous optimum of the problem ``brute_force_follower`` grids.

    Same shares, caps and transit balance; flows g_f <= B^v beta_f carry
    phi_f and the objective sum_f w_f V_f / phi_f is convex.
    """
    idle = net.idle_rates
    residual = adjust_residuals(net)
    cap = np.zeros_like(idle)
    cap[idle > 0] = residual[idle > 0] / idle[idle > 0]
    inc = net.incidence_matrix()
    n_f, n_e = len(agents), len(net.links)
    beta = cp.Variable((n_f, n_e), nonneg=True)
    g = cp.Variable((n_f, n_e), nonneg=True)
    phi = cp.Variable(n_f, nonneg=True)
    cons = [cp.sum(beta, axis=0) <= cap]
    for i, a in enumerate(agents):
        d = destinations[a.id]
        target = np.zeros(len(net.nodes))
        target[net.index_of(d)] = 1.0
        target[net.index_of(a.failure_node)] = -1.0
        transit = [k for k, n in enumerate(net.node_ids) if n not in (a.failure_node, d)]
        cons += [g[i] <= cp.multiply(idle, beta[i]), inc @ g[i] == phi[i] * target]
        if transit:
            cons.append(inc[transit] @ beta[i] == 0)
    w = np.array([max(a.unit_forward_cost * a.in_rate, MIN_WEIGHT) * a.state_size for a in agents])
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(w, cp.inv_pos(phi)))), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return math.inf, np.zeros((n_f, n_e))
    return float(prob.value), np.asarray(beta.value)


# ---------------------------------------------------------------- joint


@dataclass
class JointResult:
    cost: float
    forwarding: float
    congestion: float
    destinations: dict[str, str]
    assignments: int


def _allocation_cost(scenario: Scenario, destinations: Mapping[str, str]) -> tuple[float, float, float]:
    """Exact min of the weighted cost for fixed destinations.

    Each agent ships a flow g_f of value phi_f and holds exactly the share
    g_f / B^v it uses; extra share would only add congestion. Convex in
    (g, phi), solved by cvxpy.
    """
    net = scenario.network
    agents = scenario.agents
    idle = net.idle_rates
    c_b = np.asarray(scenario.queue_costs)
    if np.any((idle <= TOL) & (c_b > 0)):
        return math.inf, math.inf, math.inf
    n_f, n_e = len(agents), len(net.links)
    inc = net.incidence_matrix()
    g = cp.Variable((n_f, n_e), nonneg=True)
    phi = cp.Variable(n_f, nonneg=True)
    cons = [cp.sum(g, axis=0) <= idle]
    for i, a in enumerate(agents):
        target = np.zeros(len(net.nodes))
        target[net.index_of(destinations[a.id])] = 1.0
        target[net.index_of(a.failure_node)] = -1.0
        cons.append(inc @ g[i] == phi[i] * target)
    w = np.array([a.unit_forward_cost * a.in_rate * a.state_size for a in agents])
    fwd = cp.sum(cp.multiply(w, cp.inv_pos(phi)))
    q = c_b > 0
    cong = cp.sum(
        cp.multiply(c_b[q] * net.nominal_rates[q], cp.inv_pos(idle[q] - cp.sum(g, axis=0)[q]))
    )
    cw = scenario.cost_weights
    prob = cp.Problem(cp.Minimize(cw.forwarding * fwd + cw.congestion * cong), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-9)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return math.inf, math.inf, math.inf
    return float(prob.value), float(fwd.value), float(cong.value)


def joint_oracle(scenario: Scenario, budget: int = 10_000) -> JointResult:
    """Cheapest plan over every feasible destination vector."""
    agents = scenario.agents
    found: list[dict[str, str]] = []

    def walk(k: int, pool: ResourcePool) -> None:
        if len(found) > budget:
            raise OracleTooLargeError(f"more than {budget} destination vectors")
        if k == len(agents):
            found.append({p.agent_id: p.node for p in pool.placements})
            return
        for c in pool.candidates(agents[k]):
            walk(k + 1, pool.commit(agents[k], c))

    # tour order matters for which chain paths are found, so follow it
    from .leader import priority_tour

    tour = priority_tour(agents, scenario.network)
    agents = tour
    walk(0, ResourcePool(scenario.network))
    if not found:
        raise NoCandidateError("no feasible destination vector")
    best = (math.inf, math.inf, math.inf, found[0])
    for dest in sorted(found, key=lambda d: tuple(d[a.id] for a in scenario.agents)):
        cost, fwd, cong = _allocation_cost(scenario, dest)
        if cost < best[0]:
            best = (cost, fwd, cong, dest)
    return JointResult(best[0], best[1], best[2], dict(best[3]), len(found))
