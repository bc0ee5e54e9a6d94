"""
Static (event-based) pluvial flooding by fill-spill-merge.

Runoff from every cell follows D8 flow to the pit of its watershed. Watersheds
are the leaf depressions of a merge tree: two components join at their lowest
saddle, found by processing adjacent-cell pairs in order of
(max elevation of the pair, row-major indices). Water poured into a leaf first
fills the leaf's extra storage (retention, pumping), then ponds up to the leaf's
spill elevation; the excess crosses the saddle into the neighboring component
and, once both sides are full, fills the merged depression above the saddle.
Components joined to the open border drain the excess out of the domain.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..exceptions import DomainError
from .flow import NO_LABEL, OUTLET, FlowField, delineate_watersheds, flow_directions
from .grid import Cell, DemGrid, DepthRaster

logger = logging.getLogger(__name__)

OUTLET_ID = -1  # spill neighbor id of the domain outlet

# Pairs (dr, dc) covering each 8-neighbor adjacency exactly once.
_HALF_NEIGHBORHOOD = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass(frozen=True, eq=False)
class Depression:
    """A leaf depression: the catchment draining to one pit."""

    id: int  # flat index of the pit cell
    pit: Cell
    cells: np.ndarray  # flat indices of member cells
    spill_elevation: float  # math.inf if it never spills
    spill_neighbor: Optional[int]  # depression id, OUTLET_ID, or None


class DepressionHierarchy:
    """
    Merge tree of depressions for one DEM and border setting.

    Nodes 0..n_leaves-1 are the leaf depressions (ordered by pit index); the
    outlet, if any, is a leaf of unbounded capacity; internal nodes follow in
    merge order, which is a valid bottom-up order.
    """

    def __init__(self, dem: DemGrid, open_border: bool = True):
        self.dem = dem
        self.open_border = open_border
        self.flow: FlowField = flow_directions(dem, open_border=open_border)
        self.labels: np.ndarray = delineate_watersheds(self.flow)
        self._build()

    # --- construction ---
    def _build(self) -> None:
        dem = self.dem
        z = dem.elevation.ravel()
        flat_labels = self.labels.ravel()
        directions = self.flow.directions.ravel()

        terminals = np.unique(flat_labels[flat_labels != NO_LABEL])
        pit_labels = [int(t) for t in terminals if directions[t] != OUTLET]
        outlet_labels = [int(t) for t in terminals if directions[t] == OUTLET]

        self.n_leaves = len(pit_labels)
        self.leaf_ids: list[int] = pit_labels
        node_of_label = np.full(z.size, -1, dtype=np.int64)
        for node, label in enumerate(pit_labels):
            node_of_label[label] = node
        self.outlet_node: Optional[int] = None
        if self.open_border:
            # Water crossing the open border leaves through one virtual outlet.
            self.outlet_node = self.n_leaves
            node_of_label[outlet_labels] = self.outlet_node
        self._node_of_label = node_of_label

        # Leaf members, grouped by node in one pass.
        cell_nodes = np.where(
            flat_labels == NO_LABEL, -1, node_of_label[np.maximum(flat_labels, 0)]
        )
        order = np.argsort(cell_nodes, kind="stable")
        n_terminal_nodes = self.n_leaves + (1 if self.open_border else 0)
        bounds = np.searchsorted(cell_nodes[order], np.arange(n_terminal_nodes + 1))
        self.leaf_cells: list[np.ndarray] = [
            order[bounds[i] : bounds[i + 1]] for i in range(n_terminal_nodes)
        ]
        self.cell_node = cell_nodes  # terminal node of every cell (-1 for nodata)

        parent: list[Optional[int]] = [None] * n_terminal_nodes
        children: list[Optional[tuple[int, int]]] = [None] * n_terminal_nodes
        entries: list[Optional[tuple[int, int]]] = [None] * n_terminal_nodes
        top = [math.inf] * n_terminal_nodes
        cap = [math.inf] * n_terminal_nodes
        has_outlet = [False] * n_terminal_nodes
        sorted_z: list[Optional[np.ndarray]] = [
            np.sort(z[cells]) for cells in self.leaf_cells
        ]
        if self.outlet_node is not None:
            has_outlet[self.outlet_node] = True
            sorted_z[self.outlet_node] = None

        # Union-find over terminal nodes; comp[root] is the component's tree node.
        uf = list(range(n_terminal_nodes))
        comp = list(range(n_terminal_nodes))

        def find(x: int) -> int:
            while uf[x] != x:
                uf[x] = uf[uf[x]]
                x = uf[x]
            return x

        area = dem.cell_area

        def capacity(node: int, level: float) -> float:
            zs = sorted_z[node]
            if has_outlet[node] or zs is None:
                return math.inf
            k = int(np.searchsorted(zs, level, side="left"))
            if k == 0:
                return 0.0
            return max(0.0, area * (k * level - float(zs[:k].sum())))

        for a, b, saddle in self._saddle_pairs():
            na = int(cell_nodes[a])
            nb = int(cell_nodes[b]) if b >= 0 else self.outlet_node  # type: ignore[assignment]
            ra, rb = find(na), find(nb)
            if ra == rb:
                continue
            node_a, node_b = comp[ra], comp[rb]
            top[node_a] = top[node_b] = saddle
            cap[node_a] = capacity(node_a, saddle)
            cap[node_b] = capacity(node_b, saddle)

            merged = len(parent)
            parent.append(None)
            children.append((node_a, node_b))
            entries.append((na, nb))  # leaves receiving water crossing the saddle
            top.append(math.inf)
            cap.append(math.inf)
            has_outlet.append(has_outlet[node_a] or has_outlet[node_b])
            za, zb = sorted_z[node_a], sorted_z[node_b]
            if has_outlet[merged] or za is None or zb is None:
                sorted_z.append(None)
            else:
                sorted_z.append(np.sort(np.concatenate((za, zb)), kind="mergesort"))
            sorted_z[node_a] = sorted_z[node_b] = None
            parent[node_a] = parent[node_b] = merged

            uf[rb] = ra
            comp[ra] = merged

        # Roots keep an unbounded top; slab capacity is what a node holds
        # above its children.
        slab = []
        for node in range(len(parent)):
            if has_outlet[node]:
                slab.append(math.inf)
            elif children[node] is None:
                slab.append(cap[node])
            else:
                left, right = children[node]  # type: ignore[misc]
                slab.append(max(0.0, cap[node] - cap[left] - cap[right]))

        self.parent = parent
        self.children = children
        self.entries = entries
        self.top = top
        self.capacity = cap
        self.slab_capacity = slab
        self.has_outlet = has_outlet
        self.n_nodes = len(parent)

        logger.debug(
            f"Depression hierarchy: {self.n_leaves} leaf depression(s), "
            f"{self.n_nodes - n_terminal_nodes} merge(s), "
            f"outlet={'yes' if self.outlet_node is not None else 'no'}"
        )

    def _saddle_pairs(self) -> list[tuple[int, int, float]]:
        """
        Adjacent data-cell pairs across watershed boundaries, in merge order.

        With an open border every border cell also pairs with the outlet
        (second index -1) at its own elevation.
        """
        dem = self.dem
        nrows, ncols = dem.shape
        idx = np.arange(nrows * ncols).reshape(nrows, ncols)
        z = dem.elevation.ravel()
        valid = dem.valid.ravel()
        nodes = self.cell_node

        firsts, seconds = [], []
        for dr, dc in _HALF_NEIGHBORHOOD:
            a = idx[0 : nrows - dr, max(0, -dc) : ncols - max(0, dc)].ravel()
            b = idx[dr:nrows, max(0, dc) : ncols - max(0, -dc)].ravel()
            keep = valid[a] & valid[b] & (nodes[a] != nodes[b])
            firsts.append(a[keep])
            seconds.append(b[keep])
        a = np.concatenate(firsts)
        b = np.concatenate(seconds)
        saddle = np.maximum(z[a], z[b])
        lo, hi = np.minimum(a, b), np.maximum(a, b)

        if self.open_border:
            border = np.zeros((nrows, ncols), dtype=bool)
            border[0, :] = border[-1, :] = True
            border[:, 0] = border[:, -1] = True
            edge = idx[border & dem.valid]
            edge = edge[nodes[edge] != self.outlet_node]
            a = np.concatenate((a, edge))
            b = np.concatenate((b, np.full(edge.size, -1, dtype=a.dtype)))
            saddle = np.concatenate((saddle, z[edge]))
            lo = np.concatenate((lo, edge))
            hi = np.concatenate((hi, np.full(edge.size, z.size, dtype=hi.dtype)))

        order = np.lexsort((hi, lo, saddle))
        return [(int(a[i]), int(b[i]), float(saddle[i])) for i in order]

    # --- queries ---
    def leaf_of_cell(self, cell: Cell) -> int:
        """Tree node of the leaf (or outlet) a cell drains to; -1 for nodata."""
        return int(self.cell_node[self.dem.flat_index(cell)])

    def node_of_depression(self, depression_id: int) -> int:
        node = -1
        if 0 <= depression_id < self._node_of_label.size:
            node = int(self._node_of_label[depression_id])
        if not 0 <= node < self.n_leaves:
            raise DomainError(f"no depression with id {depression_id}")
        return node

    def sibling(self, node: int) -> int:
        p = self.parent[node]
        assert p is not None
        left, right = self.children[p]  # type: ignore[misc]
        return right if left == node else left

    def entry_leaf(self, parent: int, child: int) -> int:
        """The leaf of `child` that water crossing `parent`'s saddle lands in."""
        left, _ = self.children[parent]  # type: ignore[misc]
        entry_left, entry_right = self.entries[parent]  # type: ignore[misc]
        return entry_left if child == left else entry_right

    def subtree_cells(self, node: int) -> np.ndarray:
        stack, parts = [node], []
        while stack:
            n = stack.pop()
            kids = self.children[n]
            if kids is None:
                parts.append(self.leaf_cells[n])
            else:
                stack.extend(kids)
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def depressions(self) -> list[Depression]:
        out = []
        ncols = self.dem.ncols
        for node, pit in enumerate(self.leaf_ids):
            p = self.parent[node]
            if p is None:
                neighbor: Optional[int] = None
            else:
                entry = self.entry_leaf(p, self.sibling(node))
                neighbor = OUTLET_ID if entry == self.outlet_node else self.leaf_ids[entry]
            out.append(
                Depression(
                    id=pit,
                    pit=divmod(pit, ncols),
                    cells=self.leaf_cells[node],
                    spill_elevation=self.top[node],
                    spill_neighbor=neighbor,
                )
            )
        return out

    def lowest_depression_for(self, cells: list[Cell]) -> Optional[int]:
        """
        Id of the depression with the lowest pit among those whose catchments
        intersect `cells`; None if all of them drain to the outlet.
        """
        candidates = set()
        for cell in cells:
            node = self.leaf_of_cell(cell)
            if 0 <= node < self.n_leaves:
                candidates.add(self.leaf_ids[node])
        if not candidates:
            return None
        z = self.dem.elevation.ravel()
        return min(candidates, key=lambda pit: (z[pit], pit))


class _PourState:
    def __init__(self, hierarchy: DepressionHierarchy, absorb: np.ndarray):
        self.own = np.zeros(hierarchy.n_nodes)
        self.full = np.zeros(hierarchy.n_nodes, dtype=bool)
        self.absorb_left = absorb
        self.absorbed = 0.0
        self.outflow = 0.0


class FloodModel:
    """Fill-spill-merge flooding on a fixed terrain; reusable across events."""

    def __init__(self, dem: DemGrid, open_border: bool = True):
        self.dem = dem
        self.open_border = open_border
        self.hierarchy = DepressionHierarchy(dem, open_border=open_border)

    def _fill(self, node: int, volume: float, state: _PourState) -> float:
        h = self.hierarchy
        if node == h.outlet_node:
            state.outflow += volume
            return 0.0
        if node < h.n_leaves and state.absorb_left[node] > 0.0:
            taken = min(volume, float(state.absorb_left[node]))
            state.absorb_left[node] -= taken
            state.absorbed += taken
            volume -= taken
        room = h.slab_capacity[node] - state.own[node]
        if volume >= room:
            state.own[node] = h.slab_capacity[node]
            state.full[node] = True
            return volume - room
        state.own[node] += volume
        return 0.0

    def _pour(self, leaf: int, volume: float, state: _PourState) -> float:
        """Pours water into a leaf; returns what no depression could hold."""
        h = self.hierarchy
        # Each frame: [current node, node at which to hand leftover back].
        frames: list[list[Optional[int]]] = [[leaf, None]]
        while True:
            node, stop = frames[-1]
            assert node is not None
            if not state.full[node]:
                volume = self._fill(node, volume, state)
                if volume <= 0.0:
                    return 0.0
            parent = h.parent[node]
            if node == stop or parent is None:
                frames.pop()
                if not frames:
                    return volume
                continue
            sibling = h.sibling(node)
            frames[-1][0] = parent
            if not state.full[sibling]:
                frames.append([h.entry_leaf(parent, sibling), sibling])

    @staticmethod
    def _level(z_sorted: np.ndarray, volume_per_area: float) -> float:
        """Water level holding `volume_per_area` over cells with these elevations."""
        prefix = np.cumsum(z_sorted)
        k = np.arange(1, z_sorted.size + 1)
        levels = (volume_per_area + prefix) / k
        fits = np.empty(z_sorted.size, dtype=bool)
        fits[:-1] = levels[:-1] <= z_sorted[1:]
        fits[-1] = True
        return float(levels[int(np.argmax(fits))])

    def _depths(self, state: _PourState) -> np.ndarray:
        h = self.hierarchy
        z = self.dem.elevation.ravel()
        depth = np.zeros(z.size)
        area = self.dem.cell_area
        roots = [n for n in range(h.n_nodes) if h.parent[n] is None]
        stack = list(roots)
        while stack:
            node = stack.pop()
            if node == h.outlet_node:
                continue
            kids = h.children[node]
            if kids is not None and state.own[node] <= 0.0:
                stack.extend(kids)
                continue
            if state.own[node] <= 0.0:
                continue
            if kids is None:
                volume = state.own[node]
                cells = h.leaf_cells[node]
            else:
                volume = h.capacity[kids[0]] + h.capacity[kids[1]] + state.own[node]
                cells = h.subtree_cells(node)
            elevations = z[cells]
            level = self._level(np.sort(elevations), volume / area)
            depth[cells] = np.maximum(level - elevations, 0.0)
        return depth.reshape(self.dem.shape)

    def simulate(
        self,
        effective_rain: Union[float, np.ndarray],
        extra_storage: Optional[Mapping[int, float]] = None,
        pumped: Optional[Mapping[int, float]] = None,
    ) -> DepthRaster:
        """
        Floods the terrain with one event.

        Args:
            effective_rain: Rain depth in meters, scalar or per cell.
            extra_storage: Depression id -> retention volume (m³).
            pumped: Depression id -> pumped volume (m³) for this event.

        Raises:
            DomainError: On negative or non-finite inputs or unknown depressions.
        """
        h = self.hierarchy
        dem = self.dem
        rain = np.broadcast_to(np.asarray(effective_rain, dtype=np.float64), dem.shape)
        if not np.all(np.isfinite(rain)) or np.any(rain < 0):
            raise DomainError("effective rain must be finite and non-negative")

        absorb = np.zeros(max(h.n_leaves, 1))
        for volumes in (extra_storage or {}, pumped or {}):
            for depression_id, volume in volumes.items():
                if not (math.isfinite(volume) and volume >= 0):
                    raise DomainError(
                        f"volume for depression {depression_id} must be >= 0"
                    )
                absorb[h.node_of_depression(depression_id)] += volume

        runoff = np.where(dem.valid, rain, 0.0).ravel() * dem.cell_area
        data = h.cell_node >= 0
        n_terminal = h.n_leaves + (0 if h.outlet_node is None else 1)
        inflow = np.bincount(h.cell_node[data], weights=runoff[data], minlength=n_terminal)

        state = _PourState(h, absorb)
        for node in range(n_terminal):
            if inflow[node] > 0.0:
                leftover = self._pour(node, float(inflow[node]), state)
                if leftover > 0.0:
                    # Only reachable through rounding in an unbounded root.
                    state.own[node] += leftover

        depth = self._depths(state)
        result = DepthRaster(
            depth=depth,
            cellsize=dem.cellsize,
            inflow_volume=float(inflow.sum()),
            absorbed_volume=state.absorbed,
            outflow_volume=state.outflow,
            nodata=dem.nodata,
        )
        logger.debug(
            f"Flood event: inflow {result.inflow_volume:.3f} m3, "
            f"absorbed {result.absorbed_volume:.3f} m3, "
            f"outflow {result.outflow_volume:.3f} m3, "
            f"{result.flooded_cells()} wet cell(s)"
        )
        return result


def find_depressions(dem: DemGrid, open_border: bool = True) -> list[Depression]:
    """Leaf depressions of a DEM with their spill elevations and neighbors."""
    return DepressionHierarchy(dem, open_border=open_border).depressions()


def simulate_flood(
    dem: DemGrid,
    effective_rain: Union[float, np.ndarray],
    extra_storage: Optional[Mapping[int, float]] = None,
    pumped: Optional[Mapping[int, float]] = None,
    open_border: bool = True,
) -> DepthRaster:
    """One-off flood simulation; see `FloodModel.simulate`."""
    return FloodModel(dem, open_border=open_border).simulate(
        effective_rain, extra_storage=extra_storage, pumped=pumped
    )
