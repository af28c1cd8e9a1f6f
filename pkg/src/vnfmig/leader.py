"""Destination selection: Viterbi heuristic plus exhaustive, greedy and random baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NoCandidateError, OracleTooLargeError
from .hmm import HmmModel, decode
from .network import TOL, Network, Path
from .resources import Candidate, ResourcePool
from .scenario import Agent, EmissionWeights, LeaderWeights, Scenario

DEFAULT_EXHAUSTIVE_BUDGET = 200_000
UTILITY_TIE = 1e-12

LEADER_ALGORITHMS = ("viterbi", "exhaustive", "greedy", "random")


@dataclass
class LeaderSolution:
    destinations: dict[str, str]
    utility_parts: tuple[float, float, float]
    total_utility: float
    used: dict[str, int]
    chain_paths: dict[str, tuple[Path, Path]] = field(default_factory=dict)
    algorithm: str = ""
    order: tuple[str, ...] = ()
    log_prob: float | None = None

    def to_dict(self) -> dict:
        u_n, u_l, u_p = self.utility_parts
        return {
            "algorithm": self.algorithm,
            "destinations": dict(sorted(self.destinations.items())),
            "order": list(self.order),
            "utility": {"network": u_n, "load": u_l, "power": u_p, "total": self.total_utility},
            "used": [n for n, v in sorted(self.used.items()) if v],
        }


# ------------------------------------------------------------------ helpers


def candidate_set(agent: Agent, net: Network, committed: ResourcePool | None = None) -> list[Candidate]:
    """Feasible hosts for ``agent`` given what earlier agents already took."""
    pool = committed if committed is not None else ResourcePool(net)
    cands = pool.candidates(agent)
    if not cands:
        raise NoCandidateError(f"agent {agent.id} has no feasible destination")
    return cands


def priority_tour(agents: Sequence[Agent], net: Network) -> list[Agent]:
    """Highest R V / T first, then repeatedly the agent whose failure node is
    closest (in hops, either direction) to the previous one."""
    if not agents:
        return []
    dist = {a.failure_node: net.hop_distances_from(a.failure_node) for a in agents}

    def hops(a: Agent, b: Agent) -> float:
        d1 = dist[a.failure_node].get(b.failure_node, math.inf)
        d2 = dist[b.failure_node].get(a.failure_node, math.inf)
        return min(d1, d2)

    remaining = sorted(agents, key=lambda a: (-a.priority, a.id))
    tour = [remaining.pop(0)]
    while remaining:
        prev = tour[-1]
        nxt = min(remaining, key=lambda a: (hops(prev, a), -a.priority, a.id))
        remaining.remove(nxt)
        tour.append(nxt)
    return tour


def best_capacity(agent: Agent, net: Network) -> float:
    return max(
        (net.multipath_capacity(agent.failure_node, n) for n in net.node_ids if n != agent.failure_node),
        default=0.0,
    )


def leader_utilities(
    destinations: Mapping[str, str],
    agents: Sequence[Agent],
    net: Network,
    weights: LeaderWeights = LeaderWeights(),
) -> tuple[float, float, float, float]:
    """(U_n, U_l, U_p, weighted total) of a destination vector."""
    num = sum(net.multipath_capacity(a.failure_node, destinations[a.id]) for a in agents)
    den = sum(best_capacity(a, net) for a in agents)
    if den <= TOL:
        raise NoCandidateError("no agent can reach any other node")
    u_n = float(num / den)
    used = np.zeros(len(net.nodes), dtype=bool)
    for a in agents:
        used[net.index_of(destinations[a.id])] = True
    total_compute = float(net.compute.sum())
    u_l = float(net.compute[used].sum()) / total_compute if total_compute > 0 else 0.0
    n_idle = int(net.idle_flags.sum())
    u_p = float((~used & net.idle_flags).sum()) / n_idle if n_idle else 1.0
    total = float(weights.network * u_n + weights.load * u_l + weights.power * u_p)
    return u_n, u_l, u_p, total


def _solution(
    scenario: Scenario, pool: ResourcePool, algorithm: str, order: Sequence[Agent], log_prob: float | None = None
) -> LeaderSolution:
    net = scenario.network
    dest = {p.agent_id: p.node for p in pool.placements}
    paths = {p.agent_id: (p.rho_in, p.rho_out) for p in pool.placements}
    u_n, u_l, u_p, total = leader_utilities(dest, scenario.agents, net, scenario.leader_weights)
    used = {n: int(n in pool.used_nodes) for n in net.node_ids}
    return LeaderSolution(
        {a.id: dest[a.id] for a in scenario.agents},
        (u_n, u_l, u_p),
        total,
        used,
        {a.id: paths[a.id] for a in scenario.agents},
        algorithm,
        tuple(a.id for a in order),
        log_prob,
    )


# --------------------------------------------------------- HMM construction


def raw_utility(agent: Agent, node: str, pool: ResourcePool, weights: EmissionWeights) -> float:
    """Placement score of ``node`` for ``agent`` against the current pool."""
    net = pool.net
    chi = net.multipath_capacity(agent.failure_node, node)
    return (
        weights.bandwidth * chi / (agent.state_size / agent.tat)
        + weights.compute * pool.remaining_compute(node) / agent.compute_demand
        + weights.idle * (0.0 if pool.is_used(node) else 1.0)
    )


def conditional_probs(
    agent: Agent, pool: ResourcePool, weights: EmissionWeights, cands: Sequence[Candidate] | None = None
) -> np.ndarray:
    """Utilities over the candidate set, normalized; zero elsewhere."""
    net = pool.net
    if cands is None:
        cands = pool.candidates(agent)
    q = np.zeros(len(net.nodes))
    for c in cands:
        q[net.index_of(c.node)] = raw_utility(agent, c.node, pool, weights)
    s = q.sum()
    if s <= 0:
        return np.zeros_like(q)
    return q / s


def initial_probs(conditionals: Sequence[np.ndarray]) -> np.ndarray:
    """Destination distribution of a uniformly chosen failed VNF."""
    rows = [q for q in conditionals if q.sum() > 0]
    if not rows:
        raise NoCandidateError("no VNF has a feasible destination")
    return np.mean(rows, axis=0)


def emission_column(q: np.ndarray, initial: np.ndarray) -> np.ndarray:
    """Bayes inversion of q against the destination prior, renormalized."""
    out = np.zeros_like(q)
    live = (q > 0) & (initial > 0)
    out[live] = q[live] / initial[live]
    s = out.sum()
    if s <= 0:
        raise NoCandidateError("empty emission column")
    return out / s


def emission_matrix(conditionals: Sequence[np.ndarray], initial: np.ndarray) -> np.ndarray:
    return np.column_stack([emission_column(q, initial) for q in conditionals])


def _vnf_universe(scenario: Scenario) -> list[Agent]:
    seen = {u.id for u in scenario.vnfs}
    return list(scenario.vnfs) + [a for a in scenario.agents if a.id not in seen]


def prior_and_emissions(
    scenario: Scenario, tour: Sequence[Agent], pool: ResourcePool
) -> tuple[np.ndarray, np.ndarray, list[list[Candidate]]]:
    w = scenario.emission_weights
    cond: dict[str, np.ndarray] = {}
    cands: dict[str, list[Candidate]] = {}
    for u in _vnf_universe(scenario):
        cands[u.id] = pool.candidates(u)
        cond[u.id] = conditional_probs(u, pool, w, cands[u.id])
    for a in tour:
        if not cands[a.id]:
            raise NoCandidateError(f"agent {a.id} has no feasible destination")
    initial = initial_probs(list(cond.values()))
    emissions = emission_matrix([cond[a.id] for a in tour], initial)
    return initial, emissions, [cands[a.id] for a in tour]


def transition_matrix(
    tour: Sequence[Agent], k: int, pool: ResourcePool, weights: EmissionWeights
) -> np.ndarray:
    """Rows for moving from agent k (placed at state m) to agent k + 1.

    Row m re-scores agent k + 1 after debiting agent k's placement at m from
    ``pool``. States that cannot host agent k, or after which agent k + 1 has
    nowhere to go, get an all-zero row.
    """
    net = pool.net
    n = len(net.nodes)
    out = np.zeros((n, n))
    for c in pool.candidates(tour[k]):
        after = pool.commit(tour[k], c)
        out[net.index_of(c.node)] = conditional_probs(tour[k + 1], after, weights)
    return out


def build_hmm(scenario: Scenario, tour: Sequence[Agent] | None = None) -> HmmModel:
    """Fully tabulated model where every transition is scored against the
    base pool debited by the previous step only."""
    net = scenario.network
    tour = list(tour) if tour is not None else priority_tour(scenario.agents, net)
    pool = ResourcePool(net)
    initial, emissions, _ = prior_and_emissions(scenario, tour, pool)
    transitions = [
        transition_matrix(tour, k, pool, scenario.emission_weights) for k in range(len(tour) - 1)
    ]
    return HmmModel(net.node_ids, tuple(a.id for a in tour), initial, emissions, transitions)


# ------------------------------------------------------------- algorithms


def viterbi_leader(scenario: Scenario) -> LeaderSolution:
    """Viterbi decoding where each survivor carries its own resource pool.

    The transition row out of state m at step k is scored against the pool of
    the best partial assignment ending at m, so every decoded sequence is
    feasible as a whole and not only pairwise.
    """
    net = scenario.network
    w = scenario.emission_weights
    tour = priority_tour(scenario.agents, net)
    base = ResourcePool(net)
    initial, emissions, tour_cands = prior_and_emissions(scenario, tour, base)

    pools: list[dict[int, ResourcePool]] = []
    row_cands: dict[tuple[int, int], dict[int, Candidate]] = {}

    def row(k: int, m: int) -> np.ndarray:
        pool = pools[k][m]
        cands = pool.candidates(tour[k + 1])
        row_cands[(k, m)] = {net.index_of(c.node): c for c in cands}
        return conditional_probs(tour[k + 1], pool, w, cands)

    def on_step(k: int, arg: np.ndarray, score: np.ndarray) -> None:
        step: dict[int, ResourcePool] = {}
        if k == 0:
            for c in tour_cands[0]:
                i = net.index_of(c.node)
                if np.isfinite(score[i]):
                    step[i] = base.commit(tour[0], c)
        else:
            for i in np.flatnonzero(np.isfinite(score)):
                m = int(arg[i])
                step[int(i)] = pools[k - 1][m].commit(tour[k], row_cands[(k - 1, m)][int(i)])
        pools.append(step)

    states, log_prob = decode(initial, emissions, row, on_step)
    final = pools[len(tour) - 1][states[-1]]
    return _solution(scenario, final, "viterbi", tour, log_prob)


def greedy_sort_leader(scenario: Scenario) -> LeaderSolution:
    """Tour order; each agent takes its best-scoring feasible host."""
    net = scenario.network
    tour = priority_tour(scenario.agents, net)
    pool = ResourcePool(net)
    for a in tour:
        cands = candidate_set(a, net, pool)
        scores = [raw_utility(a, c.node, pool, scenario.emission_weights) for c in cands]
        best = int(np.argmax(scores))  # first maximum = lowest node id
        pool = pool.commit(a, cands[best])
    return _solution(scenario, pool, "greedy", tour)


def random_leader(scenario: Scenario, seed: int = 0) -> LeaderSolution:
    net = scenario.network
    rng = np.random.default_rng(seed)
    tour = priority_tour(scenario.agents, net)
    pool = ResourcePool(net)
    for a in tour:
        cands = candidate_set(a, net, pool)
        pool = pool.commit(a, cands[int(rng.integers(len(cands)))])
    return _solution(scenario, pool, "random", tour)


def exhaustive_leader(scenario: Scenario, budget: int = DEFAULT_EXHAUSTIVE_BUDGET) -> LeaderSolution:
    """Best joint assignment by enumeration; ties go to the smaller id tuple."""
    net = scenario.network
    tour = priority_tour(scenario.agents, net)
    base = ResourcePool(net)
    size = 1
    for a in tour:
        size *= len(base.candidates(a))
        if size > budget:
            raise OracleTooLargeError(f"more than {budget} joint assignments")
    if size == 0:
        raise NoCandidateError("some agent has no feasible destination")

    agents = scenario.agents
    lw = scenario.leader_weights
    den = sum(best_capacity(a, net) for a in agents)
    if den <= TOL:
        raise NoCandidateError("no agent can reach any other node")
    chi = {
        a.id: {n: net.multipath_capacity(a.failure_node, n) for n in net.node_ids if n != a.failure_node}
        for a in agents
    }
    compute = dict(zip(net.node_ids, net.compute))
    total_compute = float(net.compute.sum())
    idle = {n for n, f in zip(net.node_ids, net.idle_flags) if f}

    best: tuple[float, tuple[str, ...], ResourcePool] | None = None

    def score(pool: ResourcePool) -> float:
        dest = {p.agent_id: p.node for p in pool.placements}
        used = pool.used_nodes
        u_n = sum(chi[a.id][dest[a.id]] for a in agents) / den
        u_l = sum(compute[n] for n in used) / total_compute if total_compute > 0 else 0.0
        u_p = len(idle - used) / len(idle) if idle else 1.0
        return lw.network * u_n + lw.load * u_l + lw.power * u_p

    def walk(k: int, pool: ResourcePool) -> None:
        nonlocal best
        if k == len(tour):
            value = score(pool)
            dest = {p.agent_id: p.node for p in pool.placements}
            key = tuple(dest[a.id] for a in agents)
            if (
                best is None
                or value > best[0] + UTILITY_TIE
                or (abs(value - best[0]) <= UTILITY_TIE and key < best[1])
            ):
                best = (value, key, pool)
            return
        for c in pool.candidates(tour[k]):
            walk(k + 1, pool.commit(tour[k], c))

    walk(0, base)
    if best is None:
        raise NoCandidateError("no joint assignment satisfies the capacity constraints")
    return _solution(scenario, best[2], "exhaustive", tour)


def run_leader(scenario: Scenario, algorithm: str, seed: int = 0, budget: int = DEFAULT_EXHAUSTIVE_BUDGET) -> LeaderSolution:
    if algorithm == "viterbi":
        return viterbi_leader(scenario)
    if algorithm == "exhaustive":
        return exhaustive_leader(scenario, budget)
    if algorithm == "greedy":
        return greedy_sort_leader(scenario)
    if algorithm == "random":
        return random_leader(scenario, seed)
    raise ValueError(f"unknown leader algorithm {algorithm!r}")

