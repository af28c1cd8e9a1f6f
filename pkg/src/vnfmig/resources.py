"""Residual compute and chain bandwidth while destinations are committed.

Pools are immutable: :meth:`ResourcePool.commit` returns a new pool, which
lets the Viterbi survivors branch without copying the whole network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .network import TOL, Network, Path
from .scenario import Agent


class Placement(NamedTuple):
    agent_id: str
    node: str
    rho_in: Path
    rho_out: Path


@dataclass(frozen=True)
class Candidate:
    node: str
    rho_in: Path
    rho_out: Path


class _TreeCache:
    """BFS trees keyed by (root, direction, rate, links blocked by earlier debits)."""

    def __init__(self) -> None:
        self.trees: dict[tuple, dict[str, int | None]] = {}


class ResourcePool:
    def __init__(
        self,
        net: Network,
        compute_used: dict[int, float] | None = None,
        link_used: dict[int, float] | None = None,
        placements: tuple[Placement, ...] = (),
        _cache: _TreeCache | None = None,
    ):
        self.net = net
        self.compute_used = compute_used or {}
        self.link_used = link_used or {}
        self.placements = placements
        self._cache = _cache or _TreeCache()
        self.used_nodes = frozenset(p.node for p in placements)

    def remaining_compute(self, node: str) -> float:
        i = self.net.index_of(node)
        return float(self.net.compute[i] - self.compute_used.get(i, 0.0))

    def remaining_compute_vector(self) -> np.ndarray:
        out = self.net.compute.copy()
        for i, used in self.compute_used.items():
            out[i] -= used
        return out

    def residual_rates(self) -> np.ndarray:
        out = self.net.idle_rates.copy()
        for e, used in self.link_used.items():
            out[e] -= used
        return out

    def is_used(self, node: str) -> bool:
        return node in self.used_nodes

    # ------------------------------------------------------------ chain paths

    def _tree(self, root: str, rate: float, reverse: bool) -> dict[str, int | None]:
        idle = self.net.idle_rates
        blocked = frozenset(
            e for e, used in self.link_used.items() if idle[e] - used < rate - TOL
        )
        key = (root, reverse, rate, blocked)
        tree = self._cache.trees.get(key)
        if tree is None:
            usable = idle >= rate - TOL
            if blocked:
                usable = usable.copy()
                usable[list(blocked)] = False
            tree = self.net.bfs_tree(root, usable, reverse=reverse)
            self._cache.trees[key] = tree
        return tree

    def chain_paths(self, agent: Agent, node: str) -> tuple[Path, Path] | None:
        """Fewest-hop reconnection paths prev_hop -> node -> next_hop, if they fit."""
        # a missing chain neighbour imposes no reconnection requirement
        prev_hop = agent.prev_hop if agent.prev_hop is not None else node
        next_hop = agent.next_hop if agent.next_hop is not None else node
        fwd = self._tree(prev_hop, agent.in_rate, reverse=False)
        if node not in fwd:
            return None
        back = self._tree(next_hop, agent.out_rate, reverse=True)
        if node not in back:
            return None
        rho_in = self.net.path_in_tree(fwd, prev_hop, node)
        rho_out = self.net.path_in_tree(back, node, next_hop, reverse=True)
        shared = set(rho_in.links) & set(rho_out.links)
        if shared:
            residual = self.residual_rates()
            if any(residual[e] < agent.in_rate + agent.out_rate - TOL for e in shared):
                # route rho_out again around the bandwidth rho_in already takes
                residual[list(rho_in.links)] -= agent.in_rate
                rho_out = self.net.shortest_path(
                    node, next_hop, usable=residual >= agent.out_rate - TOL
                )
                if rho_out is None:
                    return None
        return rho_in, rho_out

    def candidates(self, agent: Agent) -> list[Candidate]:
        """Nodes that can host ``agent`` now: enough compute, reachable from the
        failed host, and chain paths with room for the agent's rates."""
        remaining = self.remaining_compute_vector()
        out = []
        for i, node in enumerate(self.net.node_ids):
            if node == agent.failure_node:
                continue
            if remaining[i] < agent.compute_demand - TOL:
                continue
            if self.net.multipath_capacity(agent.failure_node, node) <= TOL:
                continue
            paths = self.chain_paths(agent, node)
            if paths is not None:
                out.append(Candidate(node, *paths))
        return out

    def commit(self, agent: Agent, cand: Candidate) -> "ResourcePool":
        i = self.net.index_of(cand.node)
        compute_used = dict(self.compute_used)
        compute_used[i] = compute_used.get(i, 0.0) + agent.compute_demand
        link_used = dict(self.link_used)
        for e in cand.rho_in.links:
            link_used[e] = link_used.get(e, 0.0) + agent.in_rate
        for e in cand.rho_out.links:
            link_used[e] = link_used.get(e, 0.0) + agent.out_rate
        placement = Placement(agent.id, cand.node, cand.rho_in, cand.rho_out)
        return ResourcePool(
            self.net, compute_used, link_used, self.placements + (placement,), self._cache
        )
