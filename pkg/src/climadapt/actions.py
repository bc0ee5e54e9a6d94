"""
Adaptation measures: the eight-action catalog, what each measure does to the
environment, and what it costs.

Measures are one-time, per-zone, irreversible installs. The parameter bundle
seen by the flood and transport models is always recomputed from the full
install matrix, never patched incrementally.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .config import MeasureConfig
from .exceptions import DomainError, ScenarioValidationError, StateError
from .terrain.flood import FloodModel
from .terrain.grid import Cell, DemGrid
from .transport import TransportGraph, Zone

logger = logging.getLogger(__name__)


class MeasureKind(str, Enum):
    NoOp = "NoOp"
    RoadDrainageUpgrade = "RoadDrainageUpgrade"
    PermeablePaving = "PermeablePaving"
    RetentionBasin = "RetentionBasin"
    GreenRoof = "GreenRoof"
    PumpStation = "PumpStation"
    RoadElevation = "RoadElevation"
    PerimeterBerm = "PerimeterBerm"


INSTALLABLE: tuple[MeasureKind, ...] = tuple(
    k for k in MeasureKind if k is not MeasureKind.NoOp
)
_COLUMN = {kind: i for i, kind in enumerate(INSTALLABLE)}

# Effect parameter each kind acts through.
_EFFECT_FIELD = {
    MeasureKind.RoadDrainageUpgrade: "drainage_bonus",
    MeasureKind.PermeablePaving: "retention_factor",
    MeasureKind.GreenRoof: "retention_factor",
    MeasureKind.RetentionBasin: "storage_volume",
    MeasureKind.PumpStation: "pump_volume",
    MeasureKind.RoadElevation: "elevation_delta",
    MeasureKind.PerimeterBerm: "elevation_delta",
}
_NEUTRAL = {
    "drainage_bonus": 0.0,
    "retention_factor": 1.0,
    "storage_volume": 0.0,
    "pump_volume": 0.0,
    "elevation_delta": 0.0,
}


@dataclass(frozen=True)
class MeasureSpec:
    kind: MeasureKind
    capital_cost: float = 0.0
    annual_maintenance: float = 0.0
    drainage_bonus: float = 0.0
    retention_factor: float = 1.0
    storage_volume: float = 0.0
    pump_volume: float = 0.0
    elevation_delta: float = 0.0

    def __post_init__(self) -> None:
        name = self.kind.value
        if self.capital_cost < 0 or self.annual_maintenance < 0:
            raise ScenarioValidationError(f"actions.{name}: costs must be >= 0")
        if not 0 < self.retention_factor <= 1:
            raise ScenarioValidationError(
                f"actions.{name}: retention_factor must be in (0, 1]"
            )
        for attr in ("drainage_bonus", "storage_volume", "pump_volume", "elevation_delta"):
            if getattr(self, attr) < 0:
                raise ScenarioValidationError(f"actions.{name}: {attr} must be >= 0")
        effect = _EFFECT_FIELD.get(self.kind)
        for attr, neutral in _NEUTRAL.items():
            if attr != effect and getattr(self, attr) != neutral:
                raise ScenarioValidationError(
                    f"actions.{name}: {attr} has no effect for this measure"
                )
        if self.kind is MeasureKind.NoOp and (self.capital_cost or self.annual_maintenance):
            raise ScenarioValidationError("actions.NoOp: costs must be zero")


Catalog = Mapping[MeasureKind, MeasureSpec]


def load_catalog(section: Mapping[str, MeasureConfig]) -> dict[MeasureKind, MeasureSpec]:
    """
    Builds the measure catalog from the `actions` config section.

    Raises:
        ScenarioValidationError: If a kind is missing or unknown, or a measure
            carries an effect parameter it does not use.
    """
    known = {k.value for k in MeasureKind}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ScenarioValidationError(f"actions: unknown measure kind(s) {unknown}")
    missing = [k.value for k in MeasureKind if k.value not in section]
    if missing:
        raise ScenarioValidationError(f"actions: catalog is missing {missing}")
    return {
        kind: MeasureSpec(kind=kind, **section[kind.value].model_dump())
        for kind in MeasureKind
    }


@dataclass(frozen=True)
class Action:
    """One environment action: NoOp, or installing `kind` in zone `zone`."""

    kind: MeasureKind
    zone: Optional[int] = None

    def __post_init__(self) -> None:
        if (self.kind is MeasureKind.NoOp) != (self.zone is None):
            raise DomainError("NoOp takes no zone; every other measure needs one")

    @property
    def is_noop(self) -> bool:
        return self.kind is MeasureKind.NoOp

    def label(self, zones: Optional[Sequence[Zone]] = None) -> str:
        if self.zone is None:
            return self.kind.value
        zone_name = zones[self.zone].id if zones is not None else str(self.zone)
        return f"{self.kind.value}@{zone_name}"


NOOP = Action(MeasureKind.NoOp)


class InstalledMeasures:
    """Boolean install matrix, zones x installable kinds. Immutable."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.array(matrix, dtype=bool, copy=True)
        if matrix.ndim != 2 or matrix.shape[1] != len(INSTALLABLE):
            raise DomainError(
                f"install matrix must have shape (zones, {len(INSTALLABLE)})"
            )
        matrix.setflags(write=False)
        self.matrix = matrix

    @classmethod
    def empty(cls, n_zones: int) -> "InstalledMeasures":
        return cls(np.zeros((n_zones, len(INSTALLABLE)), dtype=bool))

    @property
    def n_zones(self) -> int:
        return int(self.matrix.shape[0])

    def is_installed(self, zone: int, kind: MeasureKind) -> bool:
        if kind is MeasureKind.NoOp:
            return False
        return bool(self.matrix[zone, _COLUMN[kind]])

    def with_installed(self, zone: int, kind: MeasureKind) -> "InstalledMeasures":
        if kind is MeasureKind.NoOp:
            raise DomainError("NoOp is an action, not an installable measure")
        if not 0 <= zone < self.n_zones:
            raise DomainError(f"unknown zone index {zone}")
        if self.matrix[zone, _COLUMN[kind]]:
            raise StateError(f"{kind.value} is already installed in zone {zone}")
        matrix = self.matrix.copy()
        matrix[zone, _COLUMN[kind]] = True
        return InstalledMeasures(matrix)

    def installed(self) -> list[tuple[int, MeasureKind]]:
        """(zone, kind) pairs in zone-major, catalog order."""
        zones, cols = np.nonzero(self.matrix)
        return [(int(z), INSTALLABLE[int(c)]) for z, c in zip(zones, cols)]

    def bits(self) -> str:
        return ".".join(
            "".join("1" if b else "0" for b in row) for row in self.matrix
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, InstalledMeasures) and np.array_equal(
            self.matrix, other.matrix
        )

    def __hash__(self) -> int:
        return hash(self.matrix.tobytes())


def road_cells(zone: Zone, graph: TransportGraph) -> list[Cell]:
    """Footprint cells of the zone's edges that lie inside the zone."""
    cells = {
        cell
        for edge_id in zone.edges
        for cell in graph.edges[edge_id].footprint
        if cell in zone.cells
    }
    return sorted(cells)


def boundary_cells(zone: Zone, dem: DemGrid) -> list[Cell]:
    """Zone cells touching (8-neighborhood) another zone or the grid edge."""

    def outside(cell: Cell) -> bool:
        return not dem.contains(cell) or cell not in zone.cells

    return [
        (r, c)
        for r, c in sorted(zone.cells)
        if any(
            outside((r + dr, c + dc))
            for dr in (-1, 0, 1)
            for dc in (-1, 0, 1)
            if dr or dc
        )
    ]


@dataclass(frozen=True, eq=False)
class EnvironmentParams:
    """What the installed measures do to the flood and transport models."""

    rain_multiplier: np.ndarray  # per zone
    rain_field: np.ndarray  # per cell, the multiplier of the cell's zone
    drainage_bonus: Mapping[str, float]  # per edge, meters
    storage: Mapping[int, float]  # per depression id, m3
    pumped: Mapping[int, float]  # per depression id, m3 per event
    working_dem: DemGrid
    flood_model: FloodModel


class MeasureContext:
    """
    Scenario data the measures act on, plus a cache of flood models keyed by
    the terrain-changing installs (rebuilding the depression hierarchy is the
    expensive part of deriving parameters).
    """

    def __init__(
        self,
        base_dem: DemGrid,
        zones: Sequence[Zone],
        graph: TransportGraph,
        catalog: Catalog,
        open_border: bool = True,
    ):
        self.base_dem = base_dem
        self.zones = list(zones)
        self.graph = graph
        self.catalog = catalog
        self.open_border = open_border
        self.zone_of_cell = np.full(base_dem.shape, -1, dtype=np.int64)
        for i, zone in enumerate(self.zones):
            for cell in zone.cells:
                self.zone_of_cell[cell] = i
        self._road_cells = [road_cells(z, graph) for z in self.zones]
        self._boundary_cells = [boundary_cells(z, base_dem) for z in self.zones]
        self._flood_models: dict[bytes, FloodModel] = {}

    def flood_model(self, installed: InstalledMeasures) -> FloodModel:
        terrain = installed.matrix[
            :, [_COLUMN[MeasureKind.RoadElevation], _COLUMN[MeasureKind.PerimeterBerm]]
        ]
        key = terrain.tobytes()
        if key not in self._flood_models:
            dem = self.base_dem
            for zone, kind in installed.installed():
                if kind is MeasureKind.RoadElevation:
                    cells = self._road_cells[zone]
                elif kind is MeasureKind.PerimeterBerm:
                    cells = self._boundary_cells[zone]
                else:
                    continue
                dem = dem.with_elevation_delta(cells, self.catalog[kind].elevation_delta)
            self._flood_models[key] = FloodModel(dem, open_border=self.open_border)
            logger.debug(f"Built flood model for terrain installs {terrain.tolist()}")
        return self._flood_models[key]


def derive_parameters(
    installed: InstalledMeasures, context: MeasureContext
) -> EnvironmentParams:
    """Recomputes the full parameter bundle from the install matrix."""
    n_zones = len(context.zones)
    if installed.n_zones != n_zones:
        raise DomainError("install matrix does not match the scenario's zones")
    catalog = context.catalog
    model = context.flood_model(installed)
    hierarchy = model.hierarchy

    multiplier = np.ones(n_zones)
    bonus: dict[str, float] = {}
    storage: dict[int, float] = {}
    pumped: dict[int, float] = {}
    for zone_index, kind in installed.installed():
        spec = catalog[kind]
        zone = context.zones[zone_index]
        if kind in (MeasureKind.PermeablePaving, MeasureKind.GreenRoof):
            multiplier[zone_index] *= spec.retention_factor
        elif kind is MeasureKind.RoadDrainageUpgrade:
            for edge_id in sorted(zone.edges):
                bonus[edge_id] = bonus.get(edge_id, 0.0) + spec.drainage_bonus
        elif kind in (MeasureKind.RetentionBasin, MeasureKind.PumpStation):
            depression = hierarchy.lowest_depression_for(sorted(zone.cells))
            if depression is None:
                continue  # the zone drains entirely out of the domain
            target = storage if kind is MeasureKind.RetentionBasin else pumped
            volume = (
                spec.storage_volume
                if kind is MeasureKind.RetentionBasin
                else spec.pump_volume
            )
            target[depression] = target.get(depression, 0.0) + volume

    zone_of_cell = context.zone_of_cell
    rain_field = np.where(
        zone_of_cell >= 0, multiplier[np.maximum(zone_of_cell, 0)], 1.0
    )
    return EnvironmentParams(
        rain_multiplier=multiplier,
        rain_field=rain_field,
        drainage_bonus=bonus,
        storage=storage,
        pumped=pumped,
        working_dem=model.dem,
        flood_model=model,
    )


def apply_measure(
    installed: InstalledMeasures,
    zone: int,
    kind: MeasureKind,
    context: MeasureContext,
) -> tuple[InstalledMeasures, EnvironmentParams]:
    """
    Installs `kind` in `zone` and returns the new matrix and parameter bundle.

    Raises:
        DomainError: For NoOp or an unknown zone.
        StateError: If the measure is already installed in the zone.
    """
    updated = installed.with_installed(zone, kind)
    return updated, derive_parameters(updated, context)


def step_costs(
    installed_before: InstalledMeasures, action: Action, catalog: Catalog
) -> tuple[float, float]:
    """
    (A, M) for one step: capital cost of the measure installed now and the
    maintenance of everything installed once it is in place.
    """
    capital_by_zone, maintenance_by_zone = zone_costs(installed_before, action, catalog)
    return float(sum(capital_by_zone)), float(sum(maintenance_by_zone))


def zone_costs(
    installed_before: InstalledMeasures, action: Action, catalog: Catalog
) -> tuple[list[float], list[float]]:
    """Per-zone breakdown of `step_costs`."""
    n_zones = installed_before.n_zones
    capital = [0.0] * n_zones
    maintenance = [0.0] * n_zones
    after = installed_before
    if not action.is_noop:
        assert action.zone is not None
        after = installed_before.with_installed(action.zone, action.kind)
        capital[action.zone] = catalog[action.kind].capital_cost
    for zone, kind in after.installed():
        maintenance[zone] += catalog[kind].annual_maintenance
    return capital, maintenance
