"""
D8 flow directions and watershed delineation.

Direction codes 0..7 index `NEIGHBOR_OFFSETS` (N, NE, E, SE, S, SW, W, NW);
negative codes mark terminals and masked cells.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import InvariantError, ScenarioValidationError
from .grid import Cell, DemGrid

logger = logging.getLogger(__name__)

NEIGHBOR_OFFSETS: tuple[Cell, ...] = (
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
)
PIT = -1
OUTLET = -2  # drains across an open domain border
NODATA = -3
NO_LABEL = -1


@dataclass(frozen=True, eq=False)
class FlowField:
    directions: np.ndarray  # int8, shape (nrows, ncols)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.directions.shape[0]), int(self.directions.shape[1]))

    def downstream(self, cell: Cell) -> Optional[Cell]:
        """The receiving neighbor, or None for pits, outlets and nodata."""
        code = int(self.directions[cell])
        if code < 0:
            return None
        dr, dc = NEIGHBOR_OFFSETS[code]
        return (cell[0] + dr, cell[1] + dc)


def flow_directions(dem: DemGrid, open_border: bool = False) -> FlowField:
    """
    D8 steepest-descent directions.

    Slope is the drop divided by the center-to-center distance (diagonals at
    cellsize * sqrt(2)). Among equally steep neighbors the first in scan order
    wins. Cells without a strictly lower neighbor are pits, or outlets when they
    sit on an open border. Nodata cells are walls.

    Raises:
        ScenarioValidationError: If every cell is nodata.
    """
    valid = dem.valid
    if not valid.any():
        raise ScenarioValidationError("DEM has no data cells")

    nrows, ncols = dem.shape
    padded = np.full((nrows + 2, ncols + 2), np.inf)
    padded[1:-1, 1:-1] = np.where(valid, dem.elevation, np.inf)
    center = padded[1:-1, 1:-1]

    slopes = np.empty((len(NEIGHBOR_OFFSETS), nrows, ncols))
    for k, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
        neighbor = padded[1 + dr : 1 + dr + nrows, 1 + dc : 1 + dc + ncols]
        distance = dem.cellsize * (math.sqrt(2.0) if dr and dc else 1.0)
        with np.errstate(invalid="ignore"):
            slopes[k] = (center - neighbor) / distance
    slopes[~np.isfinite(slopes)] = -np.inf

    best = np.argmax(slopes, axis=0)
    has_lower = np.take_along_axis(slopes, best[None], axis=0)[0] > 0

    directions = np.where(has_lower, best, PIT).astype(np.int8)
    if open_border:
        border = np.zeros((nrows, ncols), dtype=bool)
        border[0, :] = border[-1, :] = True
        border[:, 0] = border[:, -1] = True
        directions[border & ~has_lower] = OUTLET
    directions[~valid] = NODATA
    directions.setflags(write=False)

    logger.debug(
        f"Flow directions on {nrows}x{ncols} grid: "
        f"{int(np.count_nonzero(directions == PIT))} pit(s), "
        f"{int(np.count_nonzero(directions == OUTLET))} outlet cell(s)"
    )
    return FlowField(directions=directions)


def delineate_watersheds(flow: FlowField) -> np.ndarray:
    """
    Labels every cell with the flat index of the pit or outlet cell its flow
    path ends at. Nodata cells get NO_LABEL.

    Raises:
        InvariantError: If following directions runs into a cycle.
    """
    nrows, ncols = flow.shape
    directions = flow.directions
    unvisited, in_progress = -2, -3
    labels = np.full(nrows * ncols, unvisited, dtype=np.int64)
    labels[directions.ravel() == NODATA] = NO_LABEL

    for start in range(nrows * ncols):
        if labels[start] != unvisited:
            continue
        path = []
        current = start
        while True:
            state = labels[current]
            if state == in_progress:
                r, c = divmod(current, ncols)
                raise InvariantError(f"flow directions form a cycle through {(r, c)}")
            if state != unvisited:
                terminal = int(state)
                break
            labels[current] = in_progress
            path.append(current)
            r, c = divmod(current, ncols)
            code = int(directions[r, c])
            if code < 0:
                terminal = current
                break
            dr, dc = NEIGHBOR_OFFSETS[code]
            nr, nc = r + dr, c + dc
            if not (0 <= nr < nrows and 0 <= nc < ncols):
                raise InvariantError(f"flow from {(r, c)} leaves the grid")
            current = nr * ncols + nc
            if labels[current] == NO_LABEL:
                raise InvariantError(f"flow from {(r, c)} enters a nodata cell")
        labels[path] = terminal

    return labels.reshape(nrows, ncols)
