"""Network graph for the O-RAN/MEC cluster and its precomputed routes.

The physical plant is a small graph of radio units, DU/CU hosting servers,
routers and one core gateway (EPC, always node 0).  Links carry a capacity
(Gbps), a propagation delay (ms) and a routing weight; routing minimizes
total weight while deadline checks use delay, which is why the two are
separate fields.

For every (RU, DU server, CU server) combination the constructor stores the
min-weight fronthaul (RU to DU), midhaul (DU to CU) and backhaul (CU to EPC)
paths, so action evaluation later is a table lookup.  Topologies are
immutable after construction and safe to share across workers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from heapq import heappop, heappush

import numpy as np

logger = logging.getLogger("oranmec.topology")

EPC_ID = 0

#: Link attribute ranges used by the synthetic (Waxman) generator:
#: delay 0..0.1 ms, capacity 30..160 Gbps, weight 0..0.1.
WAXMAN_DELAY_RANGE_MS = (0.0, 0.1)
WAXMAN_CAPACITY_RANGE_GBPS = (30.0, 160.0)
WAXMAN_WEIGHT_RANGE = (0.0, 0.1)

#: Default server compute capacities (reference cores): far-edge DU hosts
#: are small, centralized CU hosts are large.
DEFAULT_DU_CAPACITY_RC = 20.0
DEFAULT_CU_CAPACITY_RC = 100.0
DEFAULT_SERVER_RATE = 1.0


class TopologyError(ValueError):
    """Invalid or unusable topology description."""


class RoutingInfeasibleError(TopologyError):
    """No path exists between two endpoints that must be connected."""


class NodeKind(str, Enum):
    RU = "ru"
    DU_SERVER = "du_server"
    CU_SERVER = "cu_server"
    ROUTER = "router"
    EPC = "epc"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind


@dataclass(frozen=True)
class Link:
    src: int
    dst: int
    capacity_gbps: float
    delay_ms: float
    weight: float


@dataclass(frozen=True)
class PathEntry:
    """Stored routes for one (RU, DU server, CU server) combination.

    Paths are node-id sequences; a single-node path (DU == CU midhaul) has
    zero delay.  Delays are the sums of the member links' delays.
    """

    fh_path: tuple[int, ...]
    mh_path: tuple[int, ...]
    bh_path: tuple[int, ...]
    fh_delay_ms: float
    mh_delay_ms: float
    bh_delay_ms: float


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    du_servers: tuple[int, ...]
    cu_servers: tuple[int, ...]
    mec_servers: tuple[int, ...]
    capacity_rc: dict[int, float]
    server_rate: dict[int, float]
    ru_ids: tuple[int, ...]
    paths: dict[tuple[int, int, int], PathEntry] = field(repr=False)

    @property
    def servers(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.du_servers) | set(self.cu_servers)))

    def path_entry(self, ru: int, du: int, cu: int) -> PathEntry:
        """Stored shortest FH/MH/BH paths for one placement choice."""
        if du not in self.du_servers:
            raise TopologyError(f"node {du} is not a DU server")
        if cu not in self.cu_servers:
            raise TopologyError(f"node {cu} is not a CU server")
        try:
            return self.paths[(ru, du, cu)]
        except KeyError:
            raise RoutingInfeasibleError(
                f"no stored route for RU {ru} via DU {du} / CU {cu}"
            ) from None

    def link_between(self, u: int, v: int) -> Link:
        for link in self.links:
            if {link.src, link.dst} == {u, v}:
                return link
        raise TopologyError(f"no link between {u} and {v}")

    def path_delay(self, path: tuple[int, ...]) -> float:
        return sum(self.link_between(u, v).delay_ms for u, v in zip(path, path[1:]))


def _adjacency(links: tuple[Link, ...]) -> dict[int, list[tuple[int, float, float]]]:
    """Undirected adjacency: node -> [(neighbor, weight, delay)]."""
    adj: dict[int, list[tuple[int, float, float]]] = {}
    for link in links:
        adj.setdefault(link.src, []).append((link.dst, link.weight, link.delay_ms))
        adj.setdefault(link.dst, []).append((link.src, link.weight, link.delay_ms))
    return adj


def _dijkstra(
    adj: dict[int, list[tuple[int, float, float]]], src: int, dst: int
) -> tuple[tuple[int, ...], float, float]:
    """Min-weight path from src to dst with its weight and delay.

    Ties on total weight break toward the lexicographically smallest node
    sequence, which the heap ordering on (weight, path) gives for free.
    """
    if src == dst:
        return (src,), 0.0, 0.0
    heap: list[tuple[float, tuple[int, ...], float]] = [(0.0, (src,), 0.0)]
    settled: set[int] = set()
    while heap:
        weight, path, delay = heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return path, weight, delay
        for nbr, w, d in adj.get(node, ()):
            if nbr not in settled:
                heappush(heap, (weight + w, path + (nbr,), delay + d))
    raise RoutingInfeasibleError(f"no path from node {src} to node {dst}")


def shortest_paths(topo: Topology, ru: int, du: int, cu: int) -> PathEntry:
    """Lookup of the precomputed FH/MH/BH routes for one placement."""
    return topo.path_entry(ru, du, cu)


def mec_path(entry: PathEntry, colocated_with_cu: bool) -> tuple[tuple[int, ...], float]:
    """Route and delay for a MEC flow given its hosting side.

    Hosted with the DU the flow stops at the fronthaul; hosted with the CU
    it continues over the midhaul.
    """
    if not colocated_with_cu:
        return entry.fh_path, entry.fh_delay_ms
    combined = entry.fh_path + entry.mh_path[1:]
    return combined, entry.fh_delay_ms + entry.mh_delay_ms


def _validate(
    nodes: list[Node],
    links: list[Link],
    du_servers: list[int],
    cu_servers: list[int],
    mec_servers: list[int],
    capacity_rc: dict[int, float],
) -> None:
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise TopologyError("duplicate node ids")
    id_set = set(ids)
    epcs = [n.id for n in nodes if n.kind is NodeKind.EPC]
    if epcs != [EPC_ID]:
        raise TopologyError(f"exactly one EPC with id {EPC_ID} required, got {epcs}")
    for link in links:
        if link.src not in id_set or link.dst not in id_set:
            raise TopologyError(f"link {link.src}-{link.dst} references unknown node")
        if link.capacity_gbps <= 0:
            raise TopologyError(
                f"link {link.src}-{link.dst} capacity must be > 0, got {link.capacity_gbps}"
            )
        if link.delay_ms < 0 or link.weight < 0:
            raise TopologyError(f"link {link.src}-{link.dst} has negative delay or weight")
    servers = set(du_servers) | set(cu_servers)
    for s in servers:
        if s not in id_set:
            raise TopologyError(f"server {s} is not a node")
    if not set(mec_servers) <= servers:
        raise TopologyError(
            f"MEC servers {sorted(set(mec_servers) - servers)} are not DU/CU servers"
        )
    for s in servers:
        cap = capacity_rc.get(s)
        if cap is None or cap <= 0:
            raise TopologyError(f"server {s} needs a positive capacity, got {cap}")


def _waxman_links(
    n: int, alpha: float, beta: float, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Random geometric edge set: nodes uniform in the unit square, edge
    probability alpha * exp(-d / (beta * d_max)).

    The raw model can leave components disconnected (it usually does for
    strong distance control); each stranded component is then attached to
    the growing connected part by its geometrically shortest candidate
    link, deterministically.
    """
    pos = rng.uniform(0.0, 1.0, size=(n, 2))
    d_max = math.sqrt(2.0)
    dist = np.hypot(pos[:, 0:1] - pos[:, 0], pos[:, 1:2] - pos[:, 1])
    edges: set[tuple[int, int]] = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.uniform() < alpha * math.exp(-dist[i, j] / (beta * d_max)):
                edges.add((i, j))

    def component(start: int) -> set[int]:
        seen = {start}
        frontier = [start]
        while frontier:
            u = frontier.pop()
            for a, b in edges:
                for v in ((b,) if a == u else (a,) if b == u else ()):
                    if v not in seen:
                        seen.add(v)
                        frontier.append(v)
        return seen

    connected = component(0)
    while len(connected) < n:
        outside = sorted(set(range(n)) - connected)
        best = min(
            ((dist[i, j], i, j) for i in outside for j in sorted(connected)),
            key=lambda t: (t[0], t[1], t[2]),
        )
        edges.add((min(best[1], best[2]), max(best[1], best[2])))
        connected |= component(best[1])
    return sorted(edges)


def _build_waxman(cfg: dict) -> tuple[list[Node], list[Link], list[int], list[int], list[int]]:
    n = int(cfg.get("n", 15))
    alpha = float(cfg.get("alpha", 0.5))
    beta = float(cfg.get("beta", 0.1))
    seed = int(cfg["seed"])
    n_du = int(cfg.get("n_du", 4))
    n_cu = int(cfg.get("n_cu", 2))
    n_ru = int(cfg.get("n_ru", 4))
    if n < 1 + n_du + n_cu + n_ru:
        raise TopologyError(
            f"waxman n={n} too small for 1 EPC + {n_du} DU + {n_cu} CU + {n_ru} RU"
        )

    du = list(range(1, 1 + n_du))
    cu = list(range(1 + n_du, 1 + n_du + n_cu))
    ru = list(range(1 + n_du + n_cu, 1 + n_du + n_cu + n_ru))
    kinds: dict[int, NodeKind] = {EPC_ID: NodeKind.EPC}
    kinds.update({i: NodeKind.DU_SERVER for i in du})
    kinds.update({i: NodeKind.CU_SERVER for i in cu})
    kinds.update({i: NodeKind.RU for i in ru})
    nodes = [Node(i, kinds.get(i, NodeKind.ROUTER)) for i in range(n)]

    rng = np.random.default_rng(seed)
    edges = _waxman_links(n, alpha, beta, rng)
    links = []
    for u, v in edges:
        delay = float(rng.uniform(*WAXMAN_DELAY_RANGE_MS))
        cap = float(rng.uniform(*WAXMAN_CAPACITY_RANGE_GBPS))
        weight = float(rng.uniform(*WAXMAN_WEIGHT_RANGE))
        links.append(Link(u, v, cap, delay, weight))
    mec = sorted(set(du) | set(cu))
    return nodes, links, du, cu, mec


def build_topology(config: dict) -> Topology:
    """Build and validate a topology, precomputing all placement routes.

    ``config`` either describes the graph explicitly (``nodes``, ``links``,
    ``du_servers``, ``cu_servers``, optional ``mec_servers``,
    ``capacity_rc``, ``server_rate``) or requests a synthetic one via
    ``waxman: {n, alpha, beta, seed, n_du, n_cu, n_ru}``.
    """
    if "waxman" in config:
        nodes, links, du_servers, cu_servers, mec_default = _build_waxman(config["waxman"])
        mec_servers = list(config.get("mec_servers", mec_default))
    else:
        try:
            nodes = [Node(int(n["id"]), NodeKind(n["kind"])) for n in config["nodes"]]
            links = [
                Link(
                    int(l["src"]),
                    int(l["dst"]),
                    float(l["capacity_gbps"]),
                    float(l["delay_ms"]),
                    float(l.get("weight", l["delay_ms"])),
                )
                for l in config["links"]
            ]
            du_servers = [int(s) for s in config["du_servers"]]
            cu_servers = [int(s) for s in config["cu_servers"]]
        except (KeyError, ValueError, TypeError) as exc:
            raise TopologyError(f"bad topology config: {exc}") from exc
        mec_servers = [
            int(s)
            for s in config.get("mec_servers", sorted(set(du_servers) | set(cu_servers)))
        ]

    capacity_rc = {int(k): float(v) for k, v in config.get("capacity_rc", {}).items()}
    for s in du_servers:
        capacity_rc.setdefault(s, DEFAULT_DU_CAPACITY_RC)
    for s in cu_servers:
        capacity_rc.setdefault(s, DEFAULT_CU_CAPACITY_RC)
    server_rate = {int(k): float(v) for k, v in config.get("server_rate", {}).items()}
    for s in set(du_servers) | set(cu_servers):
        server_rate.setdefault(s, DEFAULT_SERVER_RATE)

    _validate(nodes, links, du_servers, cu_servers, mec_servers, capacity_rc)

    ru_ids = tuple(sorted(n.id for n in nodes if n.kind is NodeKind.RU))
    if not ru_ids:
        raise TopologyError("topology has no RUs")

    adj = _adjacency(tuple(links))
    paths: dict[tuple[int, int, int], PathEntry] = {}
    for ru in ru_ids:
        for du in sorted(du_servers):
            try:
                fh_path, _, fh_delay = _dijkstra(adj, ru, du)
            except RoutingInfeasibleError as exc:
                raise TopologyError(f"RU {ru} cannot reach DU server {du}: {exc}") from exc
            for cu in sorted(cu_servers):
                mh_path, _, mh_delay = _dijkstra(adj, du, cu)
                bh_path, _, bh_delay = _dijkstra(adj, cu, EPC_ID)
                paths[(ru, du, cu)] = PathEntry(
                    fh_path, mh_path, bh_path, fh_delay, mh_delay, bh_delay
                )

    return Topology(
        nodes=tuple(nodes),
        links=tuple(links),
        du_servers=tuple(sorted(du_servers)),
        cu_servers=tuple(sorted(cu_servers)),
        mec_servers=tuple(sorted(mec_servers)),
        capacity_rc=capacity_rc,
        server_rate=server_rate,
        ru_ids=ru_ids,
        paths=paths,
    )
