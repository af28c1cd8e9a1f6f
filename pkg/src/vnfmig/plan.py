"""Migration plans: destinations, load splits, bandwidth shares, chain paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidParameterError, InvalidReferenceError
from .network import Network, Path

# alpha entries at or below this are treated as "no load on the link"
ALPHA_EPS = 1e-12


@dataclass
class MigrationPlan:
    """Decision variables for a set of failed agents.

    ``alpha[i, e]`` is the fraction of agent i's state sent over link e and
    ``beta[i, e]`` the fraction of link e's idle rate granted to agent i.
    Rows follow ``agent_ids``. ``chain_paths[id] = (rho_in, rho_out)`` are the
    reconnection paths prev_hop -> D and D -> next_hop.
    """

    agent_ids: tuple[str, ...]
    destinations: dict[str, str]
    alpha: np.ndarray
    beta: np.ndarray
    chain_paths: dict[str, tuple[Path, Path]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.agent_ids = tuple(self.agent_ids)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        shape = (len(self.agent_ids), self.alpha.shape[1] if self.alpha.ndim == 2 else -1)
        if self.alpha.ndim != 2 or self.alpha.shape != self.beta.shape or self.alpha.shape[0] != shape[0]:
            raise InvalidParameterError("alpha and beta must both be |F| x |E| matrices")
        if self.alpha.size and (self.alpha.min() < -1e-9 or self.alpha.max() > 1 + 1e-9):
            raise InvalidParameterError("alpha entries must lie in [0, 1]")
        if self.beta.size and (self.beta.min() < -1e-9 or self.beta.max() > 1 + 1e-9):
            raise InvalidParameterError("beta entries must lie in [0, 1]")
        missing = set(self.agent_ids) - set(self.destinations)
        if missing:
            raise InvalidParameterError(f"no destination for agents {sorted(missing)}")
        self._rows = {a: i for i, a in enumerate(self.agent_ids)}

    def row(self, agent_id: str) -> int:
        try:
            return self._rows[agent_id]
        except KeyError:
            raise InvalidReferenceError(f"agent {agent_id!r} is not in the plan") from None

    @classmethod
    def empty(cls, agent_ids: Sequence[str], destinations: Mapping[str, str], n_links: int) -> "MigrationPlan":
        shape = (len(agent_ids), n_links)
        return cls(tuple(agent_ids), dict(destinations), np.zeros(shape), np.zeros(shape))

    # ----------------------------------------------------------- serialization

    def to_dict(self, net: Network, extra: Mapping[str, object] | None = None) -> dict:
        def sparse(matrix: np.ndarray) -> dict:
            out = {}
            for i, a in enumerate(self.agent_ids):
                out[a] = [
                    [net.links[e].src, net.links[e].dst, float(matrix[i, e])]
                    for e in np.flatnonzero(matrix[i])
                ]
            return out

        data = {
            "agents": list(self.agent_ids),
            "destinations": {a: self.destinations[a] for a in self.agent_ids},
            "alpha": sparse(self.alpha),
            "beta": sparse(self.beta),
            "chain_paths": {
                a: {"in": list(p_in.nodes), "out": list(p_out.nodes)}
                for a, (p_in, p_out) in sorted(self.chain_paths.items())
            },
        }
        if extra:
            data.update(extra)
        return data

    @classmethod
    def from_dict(cls, data: dict, net: Network) -> "MigrationPlan":
        ids = tuple(data["agents"])
        shape = (len(ids), len(net.links))

        def dense(block: dict) -> np.ndarray:
            m = np.zeros(shape)
            for i, a in enumerate(ids):
                for src, dst, v in block.get(a, []):
                    m[i, net.link_between(src, dst)] = float(v)
            return m

        paths = {
            a: (net.path_from_nodes(p["in"]), net.path_from_nodes(p["out"]))
            for a, p in data.get("chain_paths", {}).items()
        }
        return cls(ids, dict(data["destinations"]), dense(data["alpha"]), dense(data["beta"]), paths)
