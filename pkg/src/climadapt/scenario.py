"""
Scenario loading, validation, re-serialization and fingerprinting.

A scenario is one YAML run config plus the data files it references (DEM as
an ESRI ASCII grid, network/POI/zone tables as CSV, optionally a survey).
Loading validates everything up front: schemas, cross-references and every
domain invariant.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from .actions import INSTALLABLE, Catalog, MeasureKind, load_catalog
from .config import ScenarioConfig, load_scenario_config
from .exceptions import (
    ScenarioParseError,
    ScenarioReferenceError,
    ScenarioValidationError,
)
from .formats import esri, tables
from .qol import FitConfig, FitReport, QoLWeights, SurveyRow, fit_weights, weights_from_config
from .rainfall import RainfallModel, load_rainfall_model
from .terrain.grid import DemGrid
from .transport import ImpedanceParams, Poi, TransportGraph, Zone

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    path: Optional[Path]
    dem: DemGrid
    graph: TransportGraph
    pois: tuple[Poi, ...]
    zones: tuple[Zone, ...]
    rainfall: RainfallModel
    catalog: Catalog
    weights: QoLWeights
    impedance: ImpedanceParams
    survey: Optional[tuple[SurveyRow, ...]] = None
    fit_report: Optional[FitReport] = None

    @property
    def name(self) -> str:
        return self.config.scenario.name

    @property
    def master_seed(self) -> int:
        return self.config.scenario.master_seed

    @property
    def categories(self) -> list[str]:
        return sorted({p.category for p in self.pois})

    @property
    def available_measures(self) -> tuple[MeasureKind, ...]:
        names = self.config.env.available_measures
        if names is None:
            return INSTALLABLE
        wanted = set(names)
        return tuple(k for k in INSTALLABLE if k.value in wanted)

    def zone_index(self, zone_id: str) -> int:
        for i, zone in enumerate(self.zones):
            if zone.id == zone_id:
                return i
        raise ScenarioReferenceError(f"unknown zone {zone_id!r}")

    def with_config(self, config: ScenarioConfig) -> "Scenario":
        """The same data under a modified run config (rainfall, env, agent, ...)."""
        return build_scenario(
            config,
            dem=self.dem,
            graph=self.graph,
            pois=self.pois,
            zones=self.zones,
            survey=self.survey,
            path=self.path,
        )


def _check_pois(pois: tuple[Poi, ...], graph: TransportGraph) -> None:
    seen = set()
    for poi in pois:
        if poi.id in seen:
            raise ScenarioValidationError(f"duplicate POI id {poi.id!r}")
        seen.add(poi.id)
        if poi.node not in graph.nodes:
            raise ScenarioReferenceError(
                f"POI {poi.id!r} references missing node {poi.node!r}"
            )


def _check_zones(zones: tuple[Zone, ...], graph: TransportGraph, dem: DemGrid) -> None:
    if not zones:
        raise ScenarioValidationError("scenario needs at least one zone")
    owner = np.full(dem.shape, -1, dtype=np.int64)
    seen = set()
    for i, zone in enumerate(zones):
        if zone.id in seen:
            raise ScenarioValidationError(f"duplicate zone id {zone.id!r}")
        seen.add(zone.id)
        if zone.centroid not in graph.nodes:
            raise ScenarioReferenceError(
                f"zone {zone.id!r} references missing centroid node {zone.centroid!r}"
            )
        for edge_id in sorted(zone.edges):
            if edge_id not in graph.edges:
                raise ScenarioReferenceError(
                    f"zone {zone.id!r} references missing edge {edge_id!r}"
                )
        for cell in sorted(zone.cells):
            if not dem.contains(cell):
                raise ScenarioReferenceError(
                    f"zone {zone.id!r}: cell {cell} outside the DEM"
                )
            if dem.nodata[cell]:  # type: ignore[index]
                raise ScenarioValidationError(f"zone {zone.id!r}: cell {cell} is nodata")
            if owner[cell] >= 0:
                raise ScenarioValidationError(
                    f"cell {cell} belongs to zones {zones[owner[cell]].id!r} "
                    f"and {zone.id!r}"
                )
            owner[cell] = i
    uncovered = np.argwhere((owner < 0) & dem.valid)
    if uncovered.size:
        r, c = (int(v) for v in uncovered[0])
        raise ScenarioValidationError(
            f"zones must cover every data cell; {(r, c)} has no zone "
            f"({len(uncovered)} uncovered)"
        )


def build_scenario(
    config: ScenarioConfig,
    dem: DemGrid,
    graph: TransportGraph,
    pois: tuple[Poi, ...],
    zones: tuple[Zone, ...],
    survey: Optional[tuple[SurveyRow, ...]] = None,
    path: Optional[Path] = None,
) -> Scenario:
    """
    Validates in-memory scenario parts and derives the model objects.

    Raises:
        ScenarioValidationError: (or a subclass) naming the violated rule.
    """
    graph.check_within(dem)
    _check_pois(pois, graph)
    _check_zones(zones, graph, dem)

    rainfall = load_rainfall_model(config.rainfall)
    catalog = load_catalog(config.actions)
    for name in config.env.available_measures or []:
        if name not in {k.value for k in INSTALLABLE}:
            raise ScenarioValidationError(
                f"env.available_measures: {name!r} is not an installable measure"
            )

    fit_report: Optional[FitReport] = None
    if config.qol.weights is not None:
        weights = weights_from_config(config.qol.weights)
    elif survey is not None:
        fit = config.qol.fit
        fit_report = fit_weights(
            list(survey),
            FitConfig(
                l2_lambda=fit.l2_lambda,
                max_iterations=fit.max_iterations,
                tolerance=fit.tolerance,
                include_intercept=fit.include_intercept,
            ),
        )
        weights = fit_report.weights
    else:
        raise ScenarioValidationError("qol: give explicit weights or a survey file")
    missing = sorted({p.category for p in pois} - set(weights.weights))
    if missing:
        raise ScenarioValidationError(f"qol: no weight for POI categories {missing}")

    t = config.transport
    impedance = ImpedanceParams(
        d_slow=t.d_slow, d_block=t.d_block, slow_multiplier=t.slow_multiplier
    )
    return Scenario(
        config=config,
        path=path,
        dem=dem,
        graph=graph,
        pois=tuple(pois),
        zones=tuple(zones),
        rainfall=rainfall,
        catalog=catalog,
        weights=weights,
        impedance=impedance,
        survey=survey,
        fit_report=fit_report,
    )


def load_scenario(config_path: Union[str, Path]) -> Scenario:
    """
    Loads and fully validates a scenario.

    Raises:
        ScenarioParseError: Malformed file (names file and line).
        ScenarioReferenceError: Broken cross-reference (names the offending id).
        ScenarioValidationError: Any other violated invariant.
    """
    config_path = Path(config_path)
    config = load_scenario_config(config_path)
    base = config_path.parent
    data = config.data

    def resolve(name: str) -> Path:
        candidate = Path(name)
        return candidate if candidate.is_absolute() else base / candidate

    dem = esri.read_esri_ascii(resolve(data.dem))
    nodes = tables.read_nodes(resolve(data.nodes))
    edges = tables.read_edges(resolve(data.edges))
    pois = tuple(tables.read_pois(resolve(data.pois)))
    zones = tuple(tables.read_zones(resolve(data.zones)))
    survey = tuple(tables.read_survey(resolve(data.survey))) if data.survey else None

    try:
        graph = TransportGraph(nodes, edges)
        scenario = build_scenario(config, dem, graph, pois, zones, survey, config_path)
    except ScenarioParseError:
        raise
    except ScenarioValidationError as e:
        raise type(e)(f"{config_path}: {e}") from e

    logger.info(
        f"Loaded scenario '{scenario.name}': {dem.nrows}x{dem.ncols} DEM, "
        f"{len(graph.nodes)} nodes, {len(graph.edges)} edges, "
        f"{len(zones)} zone(s), {len(pois)} POI(s)"
    )
    return scenario


def save_scenario(scenario: Scenario, directory: Union[str, Path]) -> Path:
    """Writes the scenario as a self-contained directory; returns the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    esri.write_dem(directory / "dem.asc", scenario.dem)
    tables.write_nodes(directory / "nodes.csv", scenario.graph)
    tables.write_edges(directory / "edges.csv", scenario.graph)
    tables.write_pois(directory / "pois.csv", scenario.pois)
    tables.write_zones(directory / "zones.csv", scenario.zones)
    survey_name = None
    if scenario.survey is not None:
        survey_name = "survey.csv"
        tables.write_survey(directory / survey_name, scenario.survey)

    config = scenario.config.model_dump(mode="json")
    config["data"] = {
        "dem": "dem.asc",
        "nodes": "nodes.csv",
        "edges": "edges.csv",
        "pois": "pois.csv",
        "zones": "zones.csv",
        "survey": survey_name,
    }
    config_path = directory / "config.yml"
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, sort_keys=False)
    return config_path


def fingerprint(scenario: Scenario) -> str:
    """SHA-256 over everything in the scenario that affects results."""
    config = scenario.config.model_dump(mode="json")
    config.pop("data")
    content = {
        "config": config,
        "dem": scenario.dem.content_hash(),
        "nodes": [
            [n.id, n.x, n.y, list(n.cell) if n.cell else None]
            for n in scenario.graph.nodes.values()
        ],
        "edges": [
            [e.id, e.source, e.target, e.time_s, e.bidirectional, [list(c) for c in e.footprint]]
            for e in scenario.graph.edges.values()
        ],
        "pois": [[p.id, p.category, p.node] for p in scenario.pois],
        "zones": [
            [z.id, z.name, z.population, z.centroid, sorted(map(list, z.cells)), sorted(z.edges)]
            for z in scenario.zones
        ],
        "survey": None
        if scenario.survey is None
        else [[r.satisfied, sorted(r.features.items())] for r in scenario.survey],
    }
    canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
