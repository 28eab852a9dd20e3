"""
Fog infrastructure generation: Barabasi-Albert device graph, cloud attachment,
hop/latency path tables, betweenness centrality and GA worker placement.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional

import networkx as nx
import numpy as np

from .config import TopologyConfig
from .errors import TopologyError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Device:
    device_id: int
    resources: int
    is_gateway: bool


@dataclass(frozen=True)
class Link:
    device_a: int
    device_b: int
    latency: float


@dataclass(frozen=True, eq=False)
class InfrastructureGraph:
    devices: List[Device]
    links: List[Link]
    cloud_device_id: int
    hop_table: np.ndarray = field(repr=False)
    latency_table: np.ndarray = field(repr=False)

    @property
    def fog_count(self) -> int:
        return len(self.devices)

    @property
    def gateways(self) -> List[int]:
        return [d.device_id for d in self.devices if d.is_gateway]

    @property
    def resources(self) -> np.ndarray:
        return np.array([d.resources for d in self.devices], dtype=np.int64)

    @property
    def cloud_link(self) -> Link:
        return next(l for l in self.links if self.cloud_device_id in (l.device_a, l.device_b))

    def hops_between(self, a: int, b: int) -> int:
        return int(self.hop_table[a, b])

    def latency_between(self, a: int, b: int) -> float:
        return float(self.latency_table[a, b])

    def to_networkx(self, include_cloud: bool = True) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(d.device_id for d in self.devices)
        if include_cloud:
            g.add_node(self.cloud_device_id)
        for link in self.links:
            if not include_cloud and self.cloud_device_id in (link.device_a, link.device_b):
                continue
            g.add_edge(link.device_a, link.device_b, latency=link.latency)
        return g


@dataclass(frozen=True)
class Worker:
    worker_id: int
    host_device_id: int


@dataclass(frozen=True)
class WorkerOverlay:
    workers: List[Worker]
    neighbor_sets: Dict[int, FrozenSet[int]]

    @property
    def worker_ids(self) -> List[int]:
        return [w.worker_id for w in self.workers]

    def host_of(self, worker_id: int) -> int:
        return self.workers[worker_id].host_device_id


def _path_tables(g: nx.Graph, size: int):
    hops = np.zeros((size, size), dtype=np.int64)
    latency = np.zeros((size, size), dtype=np.float64)
    # hop count and latency are minimized independently
    for src, lengths in nx.all_pairs_shortest_path_length(g):
        for dst, h in lengths.items():
            hops[src, dst] = h
    for src, lengths in nx.all_pairs_dijkstra_path_length(g, weight="latency"):
        for dst, d in lengths.items():
            latency[src, dst] = d
    return hops, latency


def build_graph(devices: List[Device], links: List[Link], cloud_device_id: int) -> InfrastructureGraph:
    """Assembles a graph from its devices and links and fills the path tables."""
    g = nx.Graph()
    g.add_nodes_from(range(cloud_device_id + 1))
    for link in links:
        g.add_edge(link.device_a, link.device_b, latency=link.latency)
    if not nx.is_connected(g):
        raise TopologyError("Infrastructure graph is not connected")
    hops, latency = _path_tables(g, cloud_device_id + 1)
    return InfrastructureGraph(
        devices=list(devices),
        links=sorted(links, key=lambda l: (l.device_a, l.device_b)),
        cloud_device_id=cloud_device_id,
        hop_table=hops,
        latency_table=latency,
    )


def _fog_betweenness(g: nx.Graph) -> Dict[int, float]:
    # unnormalized, undirected pair counting
    return {int(k): float(v) for k, v in nx.betweenness_centrality(g, normalized=False).items()}


def _ranked_by_centrality(scores: Dict[int, float]) -> List[int]:
    # rounding keeps float noise from breaking exact ties
    return sorted(scores, key=lambda d: (-round(scores[d], 9), d))


def generate_topology(cfg: TopologyConfig, seed: int) -> InfrastructureGraph:
    """
    Grows a Barabasi-Albert fog network of cfg.device_count devices, draws
    link latencies and device resources, picks the gateways and links a
    cloud node to the most central fog device. Pure in (cfg, seed).
    """
    n, m = cfg.device_count, cfg.attachments_per_node
    if n <= m:
        raise TopologyError(f"deviceCount ({n}) must exceed attachmentsPerNode ({m})")

    rng = np.random.default_rng(seed)
    graph_seed = int(rng.integers(0, 2**32))
    # growth starts from a clique of m + 1 devices
    fog = nx.barabasi_albert_graph(n, m, seed=graph_seed, initial_graph=nx.complete_graph(m + 1))

    low, high = cfg.fog_latency_range
    edges = sorted(tuple(sorted(e)) for e in fog.edges())
    links = [Link(int(a), int(b), float(rng.uniform(low, high))) for a, b in edges]

    r_low, r_high = cfg.device_resource_range
    resources = rng.integers(r_low, r_high + 1, size=n)
    gateway_count = int(round(cfg.gateway_fraction * n))
    gateways = set(int(i) for i in rng.choice(n, size=gateway_count, replace=False))
    devices = [Device(i, int(resources[i]), i in gateways) for i in range(n)]

    if cfg.cloud_attachment is not None:
        attach = cfg.cloud_attachment
    else:
        attach = _ranked_by_centrality(_fog_betweenness(fog))[0]
    cloud = n
    links.append(Link(attach, cloud, float(cfg.cloud_latency)))

    graph = build_graph(devices, links, cloud)
    logger.info(
        "Generated topology: %d fog devices, %d links, %d gateways, cloud attached to %d",
        n, len(links), gateway_count, attach,
    )
    return graph


def betweenness_centrality(graph: InfrastructureGraph) -> Dict[int, float]:
    """Exact unweighted betweenness of every fog device, cloud excluded."""
    return _fog_betweenness(graph.to_networkx(include_cloud=False))


def compute_neighbors(workers: List[Worker], graph: InfrastructureGraph, radius: int) -> Dict[int, FrozenSet[int]]:
    """
    Workers whose hosts lie within `radius` hops. A worker with nobody in
    range falls back to the workers at the minimum positive hop distance.
    """
    if radius < 0:
        raise TopologyError("neighborhood radius must be non-negative")
    neighbors = {}
    for w in workers:
        others = [o for o in workers if o.worker_id != w.worker_id]
        dist = {o.worker_id: graph.hops_between(w.host_device_id, o.host_device_id) for o in others}
        close = frozenset(o for o, h in dist.items() if h <= radius)
        if not close and dist:
            nearest = min(dist.values())
            close = frozenset(o for o, h in dist.items() if h == nearest)
            logger.warning(
                "Worker %d has no neighbor within %d hops, falling back to %d worker(s) at %d hops",
                w.worker_id, radius, len(close), nearest,
            )
        neighbors[w.worker_id] = close
    return neighbors


def place_workers(graph: InfrastructureGraph, k: int, radius: int = 1) -> WorkerOverlay:
    """Hosts k workers on the k most central fog devices (ties by device id)."""
    if not 0 < k <= graph.fog_count:
        raise TopologyError(f"Cannot place {k} workers on {graph.fog_count} fog devices")
    hosts = _ranked_by_centrality(betweenness_centrality(graph))[:k]
    workers = [Worker(i, host) for i, host in enumerate(hosts)]
    return WorkerOverlay(workers=workers, neighbor_sets=compute_neighbors(workers, graph, radius))


def graph_to_dict(graph: InfrastructureGraph) -> dict:
    cloud = graph.cloud_link
    attached = cloud.device_a if cloud.device_b == graph.cloud_device_id else cloud.device_b
    return {
        "devices": [
            {"deviceId": d.device_id, "resources": d.resources, "isGateway": d.is_gateway}
            for d in graph.devices
        ],
        "links": [
            {"deviceA": l.device_a, "deviceB": l.device_b, "latency": l.latency}
            for l in graph.links
            if l is not cloud
        ],
        "cloud": {"deviceId": graph.cloud_device_id, "attachedTo": attached, "latency": cloud.latency},
    }


def graph_from_dict(data: dict) -> InfrastructureGraph:
    try:
        devices = [Device(int(d["deviceId"]), int(d["resources"]), bool(d["isGateway"])) for d in data["devices"]]
        links = [Link(int(l["deviceA"]), int(l["deviceB"]), float(l["latency"])) for l in data["links"]]
        cloud = data["cloud"]
        links.append(Link(int(cloud["attachedTo"]), int(cloud["deviceId"]), float(cloud["latency"])))
    except (KeyError, TypeError, ValueError) as e:
        raise TopologyError(f"Malformed topology document: {e}") from e
    return build_graph(devices, links, int(cloud["deviceId"]))


def save_graph(graph: InfrastructureGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f_out:
        json.dump(graph_to_dict(graph), f_out, indent=2, sort_keys=True)
        f_out.write("\n")
    return path


def load_graph(path) -> InfrastructureGraph:
    with Path(path).open("r", encoding="utf-8") as f_in:
        return graph_from_dict(json.load(f_in))


def topology_summary(graph: InfrastructureGraph, overlay: Optional[WorkerOverlay] = None) -> dict:
    degrees = [d for _, d in graph.to_networkx(include_cloud=False).degree()]
    summary = {
        "devices": graph.fog_count,
        "links": len(graph.links) - 1,
        "gateways": len(graph.gateways),
        "cloudAttachedTo": graph_to_dict(graph)["cloud"]["attachedTo"],
        "maxDegree": max(degrees),
        "meanDegree": float(np.mean(degrees)),
    }
    if overlay is not None:
        sizes = [len(overlay.neighbor_sets[w]) for w in overlay.worker_ids]
        summary.update(
            {
                "workers": len(overlay.workers),
                "workerHosts": [w.host_device_id for w in overlay.workers],
                "neighborSetSizes": sizes,
            }
        )
    return summary
