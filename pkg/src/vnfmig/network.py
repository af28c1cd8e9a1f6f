"""Capacitated directed infrastructure network.

Nodes carry idle compute and an idle-server flag; links carry a nominal rate
and the idle rate left over by settled traffic. A :class:`Network` is
immutable after construction. Residual updates go through the ``with_*``
copy helpers.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .errors import DegenerateQueryError, InvalidParameterError, InvalidReferenceError

TOL = 1e-9

# Exact integer max-flow is used when every idle rate is a multiple of 1/_FLOW_SCALE.
_FLOW_SCALE = 1000
_INT32_MAX = 2**31 - 1


@dataclass(frozen=True)
class Node:
    id: str
    idle_compute: float
    idle: bool = False


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    nominal_rate: float
    idle_rate: float


@dataclass(frozen=True)
class Path:
    """Simple directed path; ``links`` holds link indices of the owning network.

    A path with no links (``src == dst``) is allowed only as a trivial chain
    reconnection, e.g. when the new host is itself the chain neighbour.
    """

    nodes: tuple[str, ...]
    links: tuple[int, ...]

    @property
    def src(self) -> str:
        return self.nodes[0]

    @property
    def dst(self) -> str:
        return self.nodes[-1]

    def __len__(self) -> int:
        return len(self.links)


def path_traverses(e: int, p: Path) -> int:
    """Omega(e, p): 1 if link ``e`` lies on ``p``."""
    return int(e in p.links)


class Network:
    """Directed capacitated graph G(E, N).

    Nodes are kept sorted by id, so node index order is also the
    lexicographic tie-break order used by the planners.
    """

    def __init__(self, nodes: Iterable[Node], links: Iterable[Link]):
        nodes = sorted(nodes, key=lambda n: n.id)
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self._node_index = {n.id: i for i, n in enumerate(self.nodes)}
        if len(self._node_index) != len(self.nodes):
            raise InvalidParameterError("duplicate node id")
        for n in self.nodes:
            if not n.idle_compute >= 0:
                raise InvalidParameterError(f"node {n.id}: idle_compute must be >= 0")

        self.links: tuple[Link, ...] = tuple(links)
        self._link_index: dict[tuple[str, str], int] = {}
        for i, l in enumerate(self.links):
            for end in (l.src, l.dst):
                if end not in self._node_index:
                    raise InvalidReferenceError(f"link {l.src}->{l.dst}: unknown node {end!r}")
            if l.src == l.dst:
                raise InvalidParameterError(f"self loop at {l.src}")
            if (l.src, l.dst) in self._link_index:
                raise InvalidParameterError(f"parallel link {l.src}->{l.dst}")
            if not l.nominal_rate > 0:
                raise InvalidParameterError(f"link {l.src}->{l.dst}: nominal_rate must be > 0")
            if not (-TOL <= l.idle_rate <= l.nominal_rate + TOL):
                raise InvalidParameterError(
                    f"link {l.src}->{l.dst}: idle_rate {l.idle_rate} outside [0, {l.nominal_rate}]"
                )
            self._link_index[(l.src, l.dst)] = i

        out: dict[str, list[int]] = {n.id: [] for n in self.nodes}
        inc: dict[str, list[int]] = {n.id: [] for n in self.nodes}
        for i, l in enumerate(self.links):
            out[l.src].append(i)
            inc[l.dst].append(i)
        key_out = lambda i: self._node_index[self.links[i].dst]  # noqa: E731
        key_in = lambda i: self._node_index[self.links[i].src]  # noqa: E731
        self._out = {n: tuple(sorted(v, key=key_out)) for n, v in out.items()}
        self._in = {n: tuple(sorted(v, key=key_in)) for n, v in inc.items()}

        self.idle_rates = np.array([l.idle_rate for l in self.links], dtype=float)
        self.nominal_rates = np.array([l.nominal_rate for l in self.links], dtype=float)
        self.compute = np.array([n.idle_compute for n in self.nodes], dtype=float)
        self.idle_flags = np.array([n.idle for n in self.nodes], dtype=bool)
        for arr in (self.idle_rates, self.nominal_rates, self.compute, self.idle_flags):
            arr.setflags(write=False)

        self._chi_cache: dict[tuple[str, str], float] = {}
        self._flow_backend: object | None = None

    # ------------------------------------------------------------------ lookup

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._node_index

    def __repr__(self) -> str:
        return f"Network(|N|={len(self.nodes)}, |E|={len(self.links)})"

    def index_of(self, node_id: str) -> int:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise InvalidReferenceError(f"unknown node {node_id!r}") from None

    def node(self, node_id: str) -> Node:
        return self.nodes[self.index_of(node_id)]

    def link_between(self, src: str, dst: str) -> int:
        try:
            return self._link_index[(src, dst)]
        except KeyError:
            raise InvalidReferenceError(f"no link {src}->{dst}") from None

    def has_link(self, src: str, dst: str) -> bool:
        return (src, dst) in self._link_index

    def _check_link(self, e: int) -> Link:
        if not 0 <= e < len(self.links):
            raise InvalidReferenceError(f"unknown link index {e}")
        return self.links[e]

    def out_links(self, node_id: str) -> tuple[int, ...]:
        self.index_of(node_id)
        return self._out[node_id]

    def in_links(self, node_id: str) -> tuple[int, ...]:
        self.index_of(node_id)
        return self._in[node_id]

    def successors(self, node_id: str) -> list[str]:
        return [self.links[e].dst for e in self.out_links(node_id)]

    def predecessors(self, node_id: str) -> list[str]:
        return [self.links[e].src for e in self.in_links(node_id)]

    # -------------------------------------------------------------- indicators

    def incidence(self, e: int, n: str) -> tuple[int, int]:
        """Return ``(S_b, D_b)``: is ``n`` the tail / the head of link ``e``."""
        link = self._check_link(e)
        self.index_of(n)
        return int(link.src == n), int(link.dst == n)

    def incidence_matrix(self) -> np.ndarray:
        """|N| x |E| matrix of ``D_b - S_b`` (+1 at heads, -1 at tails)."""
        m = np.zeros((len(self.nodes), len(self.links)))
        for i, l in enumerate(self.links):
            m[self._node_index[l.dst], i] += 1.0
            m[self._node_index[l.src], i] -= 1.0
        return m

    # ------------------------------------------------------------------- paths

    def path_from_nodes(self, nodes: Sequence[str]) -> Path:
        nodes = tuple(nodes)
        if not nodes:
            raise DegenerateQueryError("empty node sequence")
        for n in nodes:
            self.index_of(n)
        if len(set(nodes)) != len(nodes):
            raise InvalidParameterError(f"path revisits a node: {nodes}")
        links = tuple(self.link_between(a, b) for a, b in zip(nodes, nodes[1:]))
        return Path(nodes, links)

    def enumerate_paths(self, src: str, dst: str, max_hops: int | None = None) -> list[Path]:
        """All simple paths src -> dst with at most ``max_hops`` links, in
        lexicographic order of their node sequences."""
        self.index_of(src)
        self.index_of(dst)
        if src == dst:
            raise DegenerateQueryError("src and dst coincide")
        if max_hops is None:
            max_hops = len(self.nodes) - 1
        if max_hops < 1:
            raise InvalidParameterError("max_hops must be >= 1")

        found: list[Path] = []
        nodes = [src]
        links: list[int] = []
        on_path = {src}

        def walk(u: str) -> None:
            for e in self._out[u]:
                v = self.links[e].dst
                if v in on_path:
                    continue
                if v == dst:
                    found.append(Path(tuple(nodes) + (v,), tuple(links) + (e,)))
                    continue
                if len(links) + 1 >= max_hops:
                    continue
                nodes.append(v)
                links.append(e)
                on_path.add(v)
                walk(v)
                on_path.discard(v)
                links.pop()
                nodes.pop()

        walk(src)
        found.sort(key=lambda p: p.nodes)
        return found

    def shortest_path(
        self,
        src: str,
        dst: str,
        usable: np.ndarray | None = None,
        reverse: bool = False,
    ) -> Path | None:
        """Fewest-hop path restricted to links with ``usable[e]`` true.

        Neighbours are expanded in node-id order, which makes the result
        deterministic. Returns the trivial path when ``src == dst``.
        """
        tree = self.bfs_tree(dst if reverse else src, usable, reverse=reverse)
        return self.path_in_tree(tree, src, dst, reverse=reverse)

    def bfs_tree(
        self, root: str, usable: np.ndarray | None = None, reverse: bool = False
    ) -> dict[str, int | None]:
        """BFS parent-link map from ``root`` (over incoming links if ``reverse``)."""
        self.index_of(root)
        parent: dict[str, int | None] = {root: None}
        queue = deque([root])
        adj = self._in if reverse else self._out
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                if usable is not None and not usable[e]:
                    continue
                link = self.links[e]
                v = link.src if reverse else link.dst
                if v not in parent:
                    parent[v] = e
                    queue.append(v)
        return parent

    def path_in_tree(
        self, tree: dict[str, int | None], src: str, dst: str, reverse: bool = False
    ) -> Path | None:
        far = src if reverse else dst
        if far not in tree:
            return None
        chain: list[int] = []
        v = far
        while tree[v] is not None:
            e = tree[v]
            chain.append(e)
            v = self.links[e].dst if reverse else self.links[e].src
        if not reverse:
            chain.reverse()
        if not chain:
            return Path((src,), ())
        nodes = [self.links[chain[0]].src] + [self.links[e].dst for e in chain]
        return Path(tuple(nodes), tuple(chain))

    def hop_distance(self, a: str, b: str) -> float:
        """Directed hop count a -> b; ``inf`` when unreachable."""
        tree = self.bfs_tree(a)
        if b not in tree:
            return math.inf
        path = self.path_in_tree(tree, a, b)
        return float(len(path))

    def hop_distances_from(self, a: str) -> dict[str, int]:
        dist = {a: 0}
        queue = deque([a])
        while queue:
            u = queue.popleft()
            for e in self._out[u]:
                v = self.links[e].dst
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    # -------------------------------------------------------------- capacities

    def bottleneck_capacity(self, p: Path) -> float:
        """kappa(p): the smallest idle rate along ``p``."""
        if not p.links:
            raise DegenerateQueryError("empty path has no bottleneck")
        for e in p.links:
            self._check_link(e)
        return float(min(self.idle_rates[e] for e in p.links))

    def multipath_capacity(self, n: str, m: str) -> float:
        """chi(n, m): max-flow value from n to m under the idle link rates."""
        self.index_of(n)
        self.index_of(m)
        if n == m:
            raise DegenerateQueryError("chi(n, n) is undefined")
        key = (n, m)
        if key not in self._chi_cache:
            self._chi_cache[key] = self._max_flow(n, m)
        return self._chi_cache[key]

    def _max_flow(self, n: str, m: str) -> float:
        backend = self._flow_backend
        if backend is None:
            backend = self._flow_backend = self._build_flow_backend()
        if isinstance(backend, csr_matrix):
            res = maximum_flow(backend, self._node_index[n], self._node_index[m])
            return res.flow_value / _FLOW_SCALE
        return float(nx.maximum_flow_value(backend, n, m))

    def _build_flow_backend(self) -> object:
        scaled = self.idle_rates * _FLOW_SCALE
        integral = np.all(np.abs(scaled - np.round(scaled)) <= 1e-6)
        if integral and scaled.sum() < _INT32_MAX:
            size = len(self.nodes)
            rows = [self._node_index[l.src] for l in self.links]
            cols = [self._node_index[l.dst] for l in self.links]
            data = np.round(scaled).astype(np.int32)
            keep = data > 0
            return csr_matrix(
                (data[keep], (np.array(rows)[keep], np.array(cols)[keep])),
                shape=(size, size),
                dtype=np.int32,
            )
        g = nx.DiGraph()
        g.add_nodes_from(self.node_ids)
        for l in self.links:
            g.add_edge(l.src, l.dst, capacity=float(l.idle_rate))
        return g

    # ------------------------------------------------------------------ copies

    def with_idle_rates(self, rates: Sequence[float]) -> "Network":
        if len(rates) != len(self.links):
            raise InvalidParameterError("rate vector length does not match |E|")
        links = [
            Link(l.src, l.dst, l.nominal_rate, float(min(max(r, 0.0), l.nominal_rate)))
            for l, r in zip(self.links, rates)
        ]
        return Network(self.nodes, links)

    def with_compute(self, compute: Sequence[float]) -> "Network":
        if len(compute) != len(self.nodes):
            raise InvalidParameterError("compute vector length does not match |N|")
        nodes = [Node(n.id, float(c), n.idle) for n, c in zip(self.nodes, compute)]
        return Network(nodes, self.links)

    def with_idle_flags(self, flags: Sequence[bool]) -> "Network":
        nodes = [Node(n.id, n.idle_compute, bool(f)) for n, f in zip(self.nodes, flags)]
        return Network(nodes, self.links)

    def iter_links(self) -> Iterator[tuple[int, Link]]:
        return iter(enumerate(self.links))

    # ----------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "idle_compute": n.idle_compute, "idle": n.idle} for n in self.nodes
            ],
            "links": [
                {
                    "src": l.src,
                    "dst": l.dst,
                    "nominal_rate": l.nominal_rate,
                    "idle_rate": l.idle_rate,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        nodes = [
            Node(str(d["id"]), float(d["idle_compute"]), bool(d.get("idle", False)))
            for d in data["nodes"]
        ]
        links = [
            Link(str(d["src"]), str(d["dst"]), float(d["nominal_rate"]), float(d["idle_rate"]))
            for d in data["links"]
        ]
        return cls(nodes, links)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return self.nodes == other.nodes and self.links == other.links

    __hash__ = None  # type: ignore[assignment]
