"""Raster containers: terrain elevations and flood depths."""

import hashlib
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import DomainError, ScenarioValidationError

Cell = tuple[int, int]


def _frozen(array: np.ndarray, dtype: type) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class DemGrid:
    """
    A digital elevation model. Row 0 is the northernmost row.

    Arrays are copied and made read-only on construction, so a DemGrid can be
    shared freely between computations.
    """

    elevation: np.ndarray
    cellsize: float = 1.0
    nodata: Optional[np.ndarray] = None
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    nodata_value: float = -9999.0

    def __post_init__(self) -> None:
        elevation = np.asarray(self.elevation, dtype=np.float64)
        if elevation.ndim != 2 or elevation.size == 0:
            raise ScenarioValidationError("elevation must be a non-empty 2-D grid")
        nodata = (
            np.zeros(elevation.shape, dtype=bool)
            if self.nodata is None
            else np.asarray(self.nodata, dtype=bool)
        )
        if nodata.shape != elevation.shape:
            raise ScenarioValidationError("nodata mask shape differs from elevation")
        if not self.cellsize > 0 or not np.isfinite(self.cellsize):
            raise ScenarioValidationError("cellsize must be a positive number")
        if not np.all(np.isfinite(elevation[~nodata])):
            raise ScenarioValidationError("elevation must be finite on data cells")
        object.__setattr__(self, "elevation", _frozen(elevation, np.float64))
        object.__setattr__(self, "nodata", _frozen(nodata, bool))

    @property
    def nrows(self) -> int:
        return int(self.elevation.shape[0])

    @property
    def ncols(self) -> int:
        return int(self.elevation.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def cell_area(self) -> float:
        return self.cellsize * self.cellsize

    @property
    def valid(self) -> np.ndarray:
        assert self.nodata is not None
        return ~self.nodata

    def contains(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.nrows and 0 <= c < self.ncols

    def flat_index(self, cell: Cell) -> int:
        return cell[0] * self.ncols + cell[1]

    def with_elevation_delta(self, cells: Iterable[Cell], delta: float) -> "DemGrid":
        """A copy with `delta` meters added on the given data cells."""
        raised = np.array(self.elevation, copy=True)
        for r, c in cells:
            if not self.contains((r, c)):
                raise DomainError(f"cell {(r, c)} outside the grid")
            raised[r, c] += delta
        return DemGrid(
            elevation=raised,
            cellsize=self.cellsize,
            nodata=self.nodata,
            xllcorner=self.xllcorner,
            yllcorner=self.yllcorner,
            nodata_value=self.nodata_value,
        )

    def content_hash(self) -> str:
        """SHA-256 over shape, cellsize, origin, elevations and mask."""
        assert self.nodata is not None
        h = hashlib.sha256()
        h.update(np.array(self.shape, dtype=np.int64).tobytes())
        h.update(
            np.array(
                [self.cellsize, self.xllcorner, self.yllcorner], dtype=np.float64
            ).tobytes()
        )
        h.update(np.where(self.nodata, 0.0, self.elevation).tobytes())
        h.update(self.nodata.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class DepthRaster:
    """Flood water depth per cell (meters) plus the event's volume budget (m³)."""

    depth: np.ndarray
    cellsize: float
    inflow_volume: float = 0.0
    absorbed_volume: float = 0.0
    outflow_volume: float = 0.0
    nodata: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "depth", _frozen(self.depth, np.float64))
        if self.nodata is not None:
            object.__setattr__(self, "nodata", _frozen(self.nodata, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.depth.shape[0]), int(self.depth.shape[1]))

    @property
    def ponded_volume(self) -> float:
        return float(self.depth.sum()) * self.cellsize * self.cellsize

    def flooded_cells(self, min_depth: float = 0.0) -> int:
        """Number of cells with depth strictly above `min_depth`."""
        return int(np.count_nonzero(self.depth > min_depth))

    @classmethod
    def dry(cls, dem: DemGrid) -> "DepthRaster":
        return cls(depth=np.zeros(dem.shape), cellsize=dem.cellsize, nodata=dem.nodata)


def max_depth_over(depth: DepthRaster, cells: Iterable[Cell]) -> float:
    """
    Maximum depth over a set of cells; 0.0 for an empty set.

    Raises:
        DomainError: If a cell lies outside the raster.
    """
    nrows, ncols = depth.shape
    best = 0.0
    for r, c in cells:
        if not (0 <= r < nrows and 0 <= c < ncols):
            raise DomainError(f"cell {(r, c)} outside the {nrows}x{ncols} raster")
        value = float(depth.depth[r, c])
        if value > best:
            best = value
    return best
