"""Failed-VNF records, scenario bundles and the experiment topology generators.

Every generator is a pure function of its parameters and seed. Independent
random streams are derived from the seed with ``numpy.random.default_rng``
so that, e.g., resampling node loads does not perturb the link draw.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, InvalidReferenceError
from .network import Link, Network, Node

WEIGHT_TOL = 1e-9

# stream ids mixed into the seed
_TOPOLOGY, _LOADS, _POOL, _FAILURES = 0, 1, 2, 3


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


@dataclass(frozen=True)
class Agent:
    """A failed VNF whose state has to move to a new host."""

    id: str
    state_size: float
    tat: float
    compute_demand: float
    in_rate: float
    out_rate: float
    failure_node: str
    prev_hop: str | None = None
    next_hop: str | None = None
    unit_forward_cost: float = 1.0

    def __post_init__(self) -> None:
        for name in ("state_size", "tat", "compute_demand"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"agent {self.id}: {name} must be > 0")
        for name in ("in_rate", "out_rate", "unit_forward_cost"):
            if not getattr(self, name) >= 0:
                raise InvalidParameterError(f"agent {self.id}: {name} must be >= 0")

    @property
    def priority(self) -> float:
        """Migration priority R(f) V(f) / T(f)."""
        return self.in_rate * self.state_size / self.tat


def fold_retransfer(agent: Agent, r_fold: float) -> Agent:
    """Account for packet retransfer by inflating the state to ship."""
    if r_fold < 0:
        raise InvalidParameterError("r_fold must be >= 0")
    return replace(agent, state_size=agent.state_size * (1.0 + r_fold))


def _check_simplex(name: str, values: Sequence[float]) -> None:
    if any(v < 0 for v in values) or abs(sum(values) - 1.0) > WEIGHT_TOL:
        raise InvalidParameterError(f"{name} weights must be nonnegative and sum to 1: {values}")


@dataclass(frozen=True)
class CostWeights:
    forwarding: float = 0.5
    congestion: float = 0.5

    def __post_init__(self) -> None:
        _check_simplex("cost", (self.forwarding, self.congestion))


@dataclass(frozen=True)
class LeaderWeights:
    network: float = 1 / 3
    load: float = 1 / 3
    power: float = 1 / 3

    def __post_init__(self) -> None:
        _check_simplex("leader", (self.network, self.load, self.power))


@dataclass(frozen=True)
class EmissionWeights:
    bandwidth: float = 1 / 3
    compute: float = 1 / 3
    idle: float = 1 / 3

    def __post_init__(self) -> None:
        _check_simplex("emission", (self.bandwidth, self.compute, self.idle))


@dataclass(frozen=True)
class Scenario:
    network: Network
    agents: tuple[Agent, ...]
    name: str = "scenario"
    seed: int | None = None
    vnfs: tuple[Agent, ...] = ()
    cost_weights: CostWeights = field(default_factory=CostWeights)
    leader_weights: LeaderWeights = field(default_factory=LeaderWeights)
    emission_weights: EmissionWeights = field(default_factory=EmissionWeights)
    queue_costs: tuple[float, ...] = ()
    max_hops: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "vnfs", tuple(self.vnfs) or self.agents)
        if not self.queue_costs:
            object.__setattr__(self, "queue_costs", (1.0,) * len(self.network.links))
        else:
            object.__setattr__(self, "queue_costs", tuple(float(c) for c in self.queue_costs))
        if len(self.queue_costs) != len(self.network.links):
            raise InvalidParameterError("queue_costs must have one entry per link")
        if any(c < 0 for c in self.queue_costs):
            raise InvalidParameterError("queue costs must be >= 0")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("duplicate agent id")
        for a in self.agents + self.vnfs:
            check_agent_refs(self.network, a)
        if self.max_hops is not None and self.max_hops < 1:
            raise InvalidParameterError("max_hops must be >= 1")

    @property
    def hop_bound(self) -> int:
        return self.max_hops if self.max_hops is not None else len(self.network.nodes) - 1

    def with_agents(self, agents: Sequence[Agent]) -> "Scenario":
        return replace(self, agents=tuple(agents))

    def folded(self, r_fold: float) -> "Scenario":
        """Copy with the retransfer factor folded into every state size."""
        if r_fold == 0:
            return self
        return replace(
            self,
            agents=tuple(fold_retransfer(a, r_fold) for a in self.agents),
            vnfs=tuple(fold_retransfer(a, r_fold) for a in self.vnfs),
        )

    # ----------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "max_hops": self.max_hops,
            "network": self.network.to_dict(),
            "queue_costs": list(self.queue_costs),
            "weights": {
                "cost": asdict(self.cost_weights),
                "leader": asdict(self.leader_weights),
                "emission": asdict(self.emission_weights),
            },
            "agents": [asdict(a) for a in self.agents],
            "vnfs": [asdict(a) for a in self.vnfs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        weights = data.get("weights", {})
        return cls(
            network=Network.from_dict(data["network"]),
            agents=tuple(Agent(**a) for a in data["agents"]),
            name=data.get("name", "scenario"),
            seed=data.get("seed"),
            vnfs=tuple(Agent(**a) for a in data.get("vnfs", [])),
            cost_weights=CostWeights(**weights.get("cost", {})),
            leader_weights=LeaderWeights(**weights.get("leader", {})),
            emission_weights=EmissionWeights(**weights.get("emission", {})),
            queue_costs=tuple(data.get("queue_costs", ())),
            max_hops=data.get("max_hops"),
        )


def check_agent_refs(net: Network, agent: Agent) -> None:
    for name in ("failure_node", "prev_hop", "next_hop"):
        node = getattr(agent, name)
        if node is not None and node not in net:
            raise InvalidReferenceError(f"agent {agent.id}: {name} {node!r} is not a network node")


def dump_json(data: dict) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(data, sort_keys=True, indent=1) + "\n"


def save_scenario(scenario: Scenario, path: str | FsPath) -> None:
    FsPath(path).write_text(dump_json(scenario.to_dict()))


def load_scenario(path: str | FsPath) -> Scenario:
    return Scenario.from_dict(json.loads(FsPath(path).read_text()))


# ---------------------------------------------------------------- generators


@dataclass(frozen=True)
class TopologyParams:
    """Link and node draws shared by the generators.

    Idle link rates are uniform in ``idle_rate_range`` and rounded to
    ``rate_decimals``; a degenerate range gives equal idle rates everywhere.
    """

    nominal_rate: float = 10.0
    idle_rate_range: tuple[float, float] = (5.0, 5.0)
    node_compute: float = 8.0
    p_idle: float = 0.5
    rate_decimals: int = 2

    def __post_init__(self) -> None:
        lo, hi = self.idle_rate_range
        if not 0 <= lo <= hi <= self.nominal_rate:
            raise InvalidParameterError("idle_rate_range must lie inside [0, nominal_rate]")
        if not 0 <= self.p_idle <= 1:
            raise InvalidParameterError("p_idle must be a probability")


def _idle_rates(rng: np.random.Generator, count: int, params: TopologyParams) -> np.ndarray:
    lo, hi = params.idle_rate_range
    rates = rng.uniform(lo, hi, size=count) if hi > lo else np.full(count, lo)
    return np.clip(np.round(rates, params.rate_decimals), 0.0, params.nominal_rate)


def _build(
    names: Sequence[str],
    pairs: Sequence[tuple[str, str]],
    params: TopologyParams,
    rng: np.random.Generator,
    compute: dict[str, float] | None = None,
    idle_candidates: Sequence[str] | None = None,
) -> Network:
    rates = _idle_rates(rng, len(pairs), params)
    links = [Link(s, d, params.nominal_rate, float(r)) for (s, d), r in zip(pairs, rates)]
    draws = rng.random(len(names)) < params.p_idle
    eligible = set(names if idle_candidates is None else idle_candidates)
    nodes = [
        Node(
            n,
            float(params.node_compute if compute is None else compute[n]),
            bool(flag and n in eligible),
        )
        for n, flag in zip(names, draws)
    ]
    return Network(nodes, links)


def trapezoid_widths(levels: int) -> tuple[int, ...]:
    return tuple(range(levels + 1, 1, -1))


def gen_trapezoid(
    levels: int,
    params: TopologyParams = TopologyParams(),
    seed: int = 0,
    widths: Sequence[int] | None = None,
    bidirectional: bool = False,
) -> Network:
    """Layered network narrowing level by level (widths ``levels+1 ... 2``).

    Consecutive levels are joined as complete bipartite graphs, downward only
    unless ``bidirectional``.
    """
    if levels < 2:
        raise InvalidParameterError("a trapezoid needs at least 2 levels")
    widths = tuple(widths) if widths is not None else trapezoid_widths(levels)
    if len(widths) != levels or min(widths) < 1:
        raise InvalidParameterError("widths must give one positive width per level")
    return _layered(widths, params, seed, bidirectional)


def gen_modified_trapezoid(
    levels: int, params: TopologyParams = TopologyParams(), seed: int = 0
) -> Network:
    """Hourglass variant: a trapezoid mirrored around its narrowest level.

    The well-connected middle and the wide outer levels then compete on
    network utility separately from the idle-server penalty.
    """
    if levels < 2:
        raise InvalidParameterError("a trapezoid needs at least 2 levels")
    half = trapezoid_widths(levels)
    widths = half + half[-2::-1]
    return _layered(widths, params, seed, bidirectional=True)


def _layered(
    widths: Sequence[int], params: TopologyParams, seed: int, bidirectional: bool
) -> Network:
    rng = _rng(seed, _TOPOLOGY)
    layers = [[f"L{i}n{j:02d}" for j in range(w)] for i, w in enumerate(widths)]
    pairs: list[tuple[str, str]] = []
    for upper, lower in zip(layers, layers[1:]):
        for a in upper:
            for b in lower:
                pairs.append((a, b))
                if bidirectional:
                    pairs.append((b, a))
    names = [n for layer in layers for n in layer]
    return _build(names, pairs, params, rng)


GRID_PARAMS = TopologyParams(idle_rate_range=(2.0, 8.0))


def gen_grid_random(
    rows: int,
    cols: int,
    link_prob: float,
    seed: int = 0,
    params: TopologyParams = GRID_PARAMS,
) -> Network:
    """rows x cols nodes; every ordered node pair linked with ``link_prob``."""
    count = rows * cols
    if count < 2:
        raise InvalidParameterError("need at least two nodes")
    if not 0 <= link_prob <= 1:
        raise InvalidParameterError("link_prob must be a probability")
    rng = _rng(seed, _TOPOLOGY)
    width = max(2, len(str(count - 1)))
    names = [f"g{i:0{width}d}" for i in range(count)]
    draw = rng.random((count, count)) < link_prob
    pairs = [(names[i], names[j]) for i in range(count) for j in range(count) if i != j and draw[i, j]]
    return _build(names, pairs, params, rng)


# node count -> pods; cores = ceil(pods / 2), each pod holds 2 aggregation + 2 edge nodes
THREE_TIER_PRESETS: dict[int, int] = {18: 4, 23: 5, 27: 6, 32: 7, 36: 8, 41: 9, 45: 10}

THREE_TIER_PARAMS = TopologyParams(nominal_rate=20.0, idle_rate_range=(6.0, 16.0))


def three_tier_size(pods: int) -> int:
    return math.ceil(pods / 2) + 4 * pods


def gen_three_tier(
    pods: int, params: TopologyParams = THREE_TIER_PARAMS, seed: int = 0
) -> Network:
    """Core / aggregation / edge datacenter tree with duplex links.

    Every aggregation node uplinks to every core, every edge node to both
    aggregation nodes of its pod. Only edge nodes host compute and may be idle.
    """
    if pods < 1:
        raise InvalidParameterError("pods must be >= 1")
    rng = _rng(seed, _TOPOLOGY)
    cores = [f"c{i:02d}" for i in range(math.ceil(pods / 2))]
    aggs = [[f"p{p:02d}a{i}" for i in range(2)] for p in range(pods)]
    edges = [[f"p{p:02d}e{i}" for i in range(2)] for p in range(pods)]
    pairs: list[tuple[str, str]] = []
    for p in range(pods):
        for a in aggs[p]:
            for c in cores:
                pairs += [(a, c), (c, a)]
            for e in edges[p]:
                pairs += [(e, a), (a, e)]
    edge_nodes = [e for pod in edges for e in pod]
    names = cores + [a for pod in aggs for a in pod] + edge_nodes
    compute = {n: 0.0 for n in names}
    compute.update({e: params.node_compute for e in edge_nodes})
    return _build(names, pairs, params, rng, compute=compute, idle_candidates=edge_nodes)


def sample_node_loads(net: Network, c_r_max: float, seed: int = 0) -> Network:
    """Redraw every node's idle compute uniformly from [c_r_max/2, c_r_max]."""
    if not c_r_max > 0:
        raise InvalidParameterError("c_r_max must be > 0")
    rng = _rng(seed, _LOADS)
    return net.with_compute(rng.uniform(c_r_max / 2, c_r_max, size=len(net.nodes)))


@dataclass(frozen=True)
class AgentParams:
    state_size: tuple[float, float] = (1.0, 10.0)
    tat: tuple[float, float] = (1.0, 5.0)
    rate: tuple[float, float] = (0.1, 1.0)
    compute_demand: tuple[float, float] = (1.0, 4.0)
    unit_forward_cost: float = 1.0


def build_vnf_pool(
    net: Network,
    seed: int = 0,
    params: AgentParams = AgentParams(),
    assign_chain: bool = True,
) -> list[Agent]:
    """One VNF per active (non-idle) node that has compute.

    With ``assign_chain`` the chain neighbours are drawn from the host's
    in- and out-neighbours; hosts lacking either are skipped.
    """
    rng = _rng(seed, _POOL)
    pool = []
    for node in net.nodes:
        if node.idle or node.idle_compute <= 0:
            continue
        prev_hop = next_hop = None
        if assign_chain:
            prev_hop, next_hop = _draw_chain(net, node.id, rng)
            if prev_hop is None:
                continue
        u = lambda lohi: float(rng.uniform(*lohi))  # noqa: E731
        pool.append(
            Agent(
                id=f"v{len(pool):03d}",
                state_size=round(u(params.state_size), 3),
                tat=round(u(params.tat), 3),
                compute_demand=round(u(params.compute_demand), 3),
                in_rate=round(u(params.rate), 3),
                out_rate=round(u(params.rate), 3),
                failure_node=node.id,
                prev_hop=prev_hop,
                next_hop=next_hop,
                unit_forward_cost=params.unit_forward_cost,
            )
        )
    return pool


def _draw_chain(
    net: Network, host: str, rng: np.random.Generator
) -> tuple[str | None, str | None]:
    preds = net.predecessors(host)
    succs = net.successors(host)
    if not preds or not succs:
        return None, None
    prev_hop = preds[int(rng.integers(len(preds)))]
    others = [s for s in succs if s != prev_hop] or succs
    next_hop = others[int(rng.integers(len(others)))]
    return prev_hop, next_hop


def inject_failures(
    net: Network, pool: Sequence[Agent], fraction: float, seed: int = 0
) -> tuple[Agent, ...]:
    """Fail ceil(fraction * |pool|) VNFs chosen uniformly without replacement.

    Agents keep pool order. Missing chain neighbours are filled in from the
    hosting node's topology.
    """
    if not pool:
        raise InvalidParameterError("empty VNF pool")
    if not 0 < fraction <= 1:
        raise InvalidParameterError("fraction must lie in (0, 1]")
    count = math.ceil(round(fraction * len(pool), 9))
    rng = _rng(seed, _FAILURES)
    picked = sorted(rng.choice(len(pool), size=count, replace=False).tolist())
    failed = []
    for i in picked:
        agent = pool[i]
        if agent.prev_hop is None or agent.next_hop is None:
            prev_hop, next_hop = _draw_chain(net, agent.failure_node, rng)
            if prev_hop is None:
                raise InvalidParameterError(
                    f"{agent.failure_node} has no chain neighbours for {agent.id}"
                )
            agent = replace(
                agent,
                prev_hop=agent.prev_hop or prev_hop,
                next_hop=agent.next_hop or next_hop,
            )
        check_agent_refs(net, agent)
        failed.append(agent)
    return tuple(failed)


# ------------------------------------------------------------------- presets

PRESETS = ("trapezoid", "modified-trapezoid", "grid", "three-tier", "tiny")


def make_scenario(kind: str, seed: int, **kw) -> Scenario:
    """Build one of the experiment scenario presets.

    ``trapezoid``           levels (4), one failure, equal link resources
    ``modified-trapezoid``  levels (3), one failure, loads in [c/2, c]
    ``grid``                rows x cols (10 x 10), link_prob (0.5), fraction (0.1) or failures
    ``three-tier``          size (18..45), fraction (0.25) or failures
    ``tiny``                2 x 3 random grid, 1-2 failures
    """
    if kind == "trapezoid":
        net = gen_trapezoid(kw.pop("levels", 4), seed=seed, bidirectional=True)
        hops, count = kw.pop("max_hops", 3), kw.pop("failures", 1)
    elif kind == "modified-trapezoid":
        net = gen_modified_trapezoid(kw.pop("levels", 3), seed=seed)
        net = sample_node_loads(net, kw.pop("c_r_max", 8.0), seed=seed)
        hops, count = kw.pop("max_hops", 3), kw.pop("failures", 1)
    elif kind == "grid":
        net = gen_grid_random(kw.pop("rows", 10), kw.pop("cols", 10), kw.pop("link_prob", 0.5), seed)
        hops, count = kw.pop("max_hops", 2), kw.pop("failures", None)
    elif kind == "three-tier":
        size = kw.pop("size", 18)
        if size not in THREE_TIER_PRESETS:
            raise InvalidParameterError(f"no three-tier preset with {size} nodes")
        net = gen_three_tier(THREE_TIER_PRESETS[size], seed=seed)
        hops, count = kw.pop("max_hops", 4), kw.pop("failures", None)
    elif kind == "tiny":
        net = gen_grid_random(2, 3, kw.pop("link_prob", 0.5), seed)
        hops = kw.pop("max_hops", 5)
        count = kw.pop("failures", 1 + int(_rng(seed, _FAILURES).integers(2)))
    else:
        raise InvalidParameterError(f"unknown preset {kind!r}; choose from {PRESETS}")

    pool = build_vnf_pool(net, seed, kw.pop("agent_params", AgentParams()))
    if not pool:
        raise InvalidParameterError(f"{kind} seed {seed}: no VNF can be hosted")
    if count is not None:
        fraction = min(1.0, count / len(pool))
    else:
        fraction = kw.pop("fraction", 0.1 if kind == "grid" else 0.25)
    agents = inject_failures(net, pool, fraction, seed)
    if kw:
        raise InvalidParameterError(f"unused preset options: {sorted(kw)}")
    return Scenario(
        network=net,
        agents=agents,
        name=f"{kind}-s{seed}",
        seed=seed,
        vnfs=tuple(pool),
        max_hops=hops,
    )
