"""
Transport network, flood impedance and amenity accessibility.

Edge travel times degrade with the deepest water on the edge's footprint:
above `d_slow` the edge is slowed by `slow_multiplier`, above `d_block` it is
impassable. Drainage upgrades raise both thresholds for an edge. Accessibility
of a zone counts, per POI category, the POIs reachable from the zone's
centroid node within the travel-time threshold, per inhabitant.
"""

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import networkx as nx

from .exceptions import DomainError, ScenarioReferenceError, ScenarioValidationError
from .terrain.grid import Cell, DemGrid, DepthRaster, max_depth_over

logger = logging.getLogger(__name__)

EdgeTimes = dict[str, float]  # edge id -> seconds, math.inf when impassable


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    cell: Optional[Cell] = None


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    time_s: float
    footprint: tuple[Cell, ...] = ()
    bidirectional: bool = True


@dataclass(frozen=True)
class Poi:
    id: str
    category: str
    node: str


@dataclass(frozen=True)
class Zone:
    id: str
    name: str
    population: float
    centroid: str
    cells: frozenset[Cell]
    edges: frozenset[str]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.population) and self.population > 0):
            raise ScenarioValidationError(f"zone {self.id}: population must be > 0")


@dataclass(frozen=True)
class ImpedanceParams:
    d_slow: float = 0.10
    d_block: float = 0.30
    slow_multiplier: float = 4.0

    def __post_init__(self) -> None:
        if not 0 <= self.d_slow < self.d_block:
            raise ScenarioValidationError("impedance needs 0 <= d_slow < d_block")
        if not self.slow_multiplier >= 1:
            raise ScenarioValidationError("slow_multiplier must be >= 1")


@dataclass(frozen=True)
class AccessProfile:
    """Per-capita counts of reachable POIs, by category."""

    zone_id: str
    values: Mapping[str, float] = field(default_factory=dict)

    def __getitem__(self, category: str) -> float:
        return self.values[category]


class TransportGraph:
    """Nodes and edges of the road network; immutable after construction."""

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise ScenarioValidationError(f"duplicate node id {node.id!r}")
            self.nodes[node.id] = node
        self.edges: dict[str, Edge] = {}
        for edge in edges:
            if edge.id in self.edges:
                raise ScenarioValidationError(f"duplicate edge id {edge.id!r}")
            if not (math.isfinite(edge.time_s) and edge.time_s > 0):
                raise ScenarioValidationError(
                    f"edge {edge.id!r}: travel time must be finite and > 0"
                )
            for end in (edge.source, edge.target):
                if end not in self.nodes:
                    raise ScenarioReferenceError(
                        f"edge {edge.id!r} references missing node {end!r}"
                    )
            self.edges[edge.id] = edge

    def check_within(self, dem: DemGrid) -> None:
        """Verifies that node cells and edge footprints lie on the DEM."""
        for node in self.nodes.values():
            if node.cell is not None and not dem.contains(node.cell):
                raise ScenarioReferenceError(
                    f"node {node.id!r}: cell {node.cell} outside the DEM"
                )
        for edge in self.edges.values():
            for cell in edge.footprint:
                if not dem.contains(cell):
                    raise ScenarioReferenceError(
                        f"edge {edge.id!r}: footprint cell {cell} outside the DEM"
                    )

    @cached_property
    def network(self) -> nx.MultiDiGraph:
        """Directed multigraph; bidirectional edges appear once per direction."""
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.nodes)
        for edge in self.edges.values():
            g.add_edge(edge.source, edge.target, key=edge.id, edge_id=edge.id)
            if edge.bidirectional:
                g.add_edge(edge.target, edge.source, key=edge.id, edge_id=edge.id)
        return g

    def free_flow_times(self) -> EdgeTimes:
        return {edge_id: edge.time_s for edge_id, edge in self.edges.items()}

    def without_edges(self) -> "TransportGraph":
        return TransportGraph(self.nodes.values(), [])


def effective_edge_times(
    graph: TransportGraph,
    depth: DepthRaster,
    params: ImpedanceParams,
    drainage_bonus: Optional[Mapping[str, float]] = None,
) -> EdgeTimes:
    """Travel time of every edge under a flood, math.inf where impassable."""
    bonuses = drainage_bonus or {}
    times: EdgeTimes = {}
    for edge_id, edge in graph.edges.items():
        bonus = bonuses.get(edge_id, 0.0)
        if bonus < 0:
            raise DomainError(f"edge {edge_id!r}: drainage bonus must be >= 0")
        d = max_depth_over(depth, edge.footprint)
        if d > params.d_block + bonus:
            times[edge_id] = math.inf
        elif d > params.d_slow + bonus:
            times[edge_id] = edge.time_s * params.slow_multiplier
        else:
            times[edge_id] = edge.time_s
    return times


def shortest_times(
    graph: TransportGraph, times: Mapping[str, float], origin: str
) -> dict[str, float]:
    """
    Single-source shortest travel times over passable edges.

    Returns a time for every node, math.inf for unreachable ones.

    Raises:
        DomainError: If `origin` is not a node of the graph.
    """
    if origin not in graph.nodes:
        raise DomainError(f"origin node {origin!r} not in the network")

    def weight(u: str, v: str, parallel: dict[str, dict]) -> Optional[float]:
        passable = [times[a["edge_id"]] for a in parallel.values()]
        passable = [t for t in passable if math.isfinite(t)]
        return min(passable) if passable else None

    reached = nx.single_source_dijkstra_path_length(
        graph.network, origin, weight=weight
    )
    return {n: float(reached.get(n, math.inf)) for n in graph.nodes}


def accessibility(
    zone: Zone,
    pois: Iterable[Poi],
    times: Mapping[str, float],
    threshold: float,
    categories: Optional[Iterable[str]] = None,
) -> AccessProfile:
    """Per-capita number of POIs per category within `threshold` seconds."""
    if not threshold > 0:
        raise DomainError("accessibility threshold must be > 0")
    pois = list(pois)
    if categories is None:
        categories = {p.category for p in pois}
    wanted = sorted(set(categories))
    counts = dict.fromkeys(wanted, 0)
    for poi in pois:
        if poi.category in counts and times.get(poi.node, math.inf) <= threshold:
            counts[poi.category] += 1
    return AccessProfile(
        zone_id=zone.id,
        values={c: counts[c] / zone.population for c in wanted},
    )


def zone_accessibility(
    graph: TransportGraph,
    zones: Iterable[Zone],
    pois: Iterable[Poi],
    edge_times: Mapping[str, float],
    threshold: float,
    categories: Optional[Iterable[str]] = None,
) -> dict[str, AccessProfile]:
    """Accessibility of every zone from its centroid under one set of edge times."""
    pois = list(pois)
    if categories is None:
        categories = sorted({p.category for p in pois})
    else:
        categories = list(categories)
    profiles = {}
    for zone in zones:
        node_times = shortest_times(graph, edge_times, zone.centroid)
        profiles[zone.id] = accessibility(zone, pois, node_times, threshold, categories)
    return profiles
