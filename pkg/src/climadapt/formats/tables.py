"""
CSV tables: network nodes/edges, POIs, zones, survey, and the per-run outputs
(learning curve, per-zone QoL maps and other command outputs).

Errors name the file and the 1-based line of the offending row (the header is
line 1).
"""

import logging
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar, Union

import pandas as pd

from ..exceptions import ScenarioParseError
from ..qol import SurveyRow
from ..terrain.grid import Cell
from ..transport import Edge, Node, Poi, TransportGraph, Zone

logger = logging.getLogger(__name__)

T = TypeVar("T")

NODE_COLUMNS = ["node_id", "x", "y"]
EDGE_COLUMNS = ["edge_id", "from", "to", "time_s", "bidirectional", "footprint"]
POI_COLUMNS = ["poi_id", "category", "node_id"]
ZONE_COLUMNS = ["zone_id", "name", "population", "centroid_node", "cells", "edges"]


def _read(path: Union[str, Path], required: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True
        )
    except FileNotFoundError as e:
        raise ScenarioParseError(f"cannot read file: {e}", str(path)) from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ScenarioParseError(f"malformed CSV: {e}", str(path)) from e
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ScenarioParseError(f"missing column(s) {missing}", str(path), 1)
    return frame


def _parse(
    value: str, convert: Callable[[str], T], path: Union[str, Path], line: int, column: str
) -> T:
    try:
        return convert(value.strip())
    except (ValueError, TypeError) as e:
        raise ScenarioParseError(
            f"{column}: invalid value {value!r} ({e})", str(path), line
        ) from None


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise ValueError("expected true/false")


def parse_cells(text: str) -> tuple[Cell, ...]:
    """`r:c;r:c;...` -> cells. An empty string is an empty list."""
    cells = []
    for item in filter(None, (part.strip() for part in text.split(";"))):
        row, sep, col = item.partition(":")
        if not sep:
            raise ValueError(f"cell {item!r} is not 'row:col'")
        cells.append((int(row), int(col)))
    return tuple(cells)


def format_cells(cells: Iterable[Cell]) -> str:
    return ";".join(f"{r}:{c}" for r, c in cells)


def _id_list(text: str) -> tuple[str, ...]:
    return tuple(filter(None, (part.strip() for part in text.split(";"))))


def _rows(frame: pd.DataFrame) -> Iterable[tuple[int, dict[str, str]]]:
    for i, record in enumerate(frame.to_dict(orient="records")):
        yield i + 2, record


def read_nodes(path: Union[str, Path]) -> list[Node]:
    frame = _read(path, NODE_COLUMNS)
    has_cell = "cell_row" in frame.columns and "cell_col" in frame.columns
    nodes = []
    for line, row in _rows(frame):
        cell: Optional[Cell] = None
        if has_cell and (row["cell_row"] or row["cell_col"]):
            cell = (
                _parse(row["cell_row"], int, path, line, "cell_row"),
                _parse(row["cell_col"], int, path, line, "cell_col"),
            )
        nodes.append(
            Node(
                id=row["node_id"].strip(),
                x=_parse(row["x"], _finite, path, line, "x"),
                y=_parse(row["y"], _finite, path, line, "y"),
                cell=cell,
            )
        )
    return nodes


def read_edges(path: Union[str, Path]) -> list[Edge]:
    frame = _read(path, EDGE_COLUMNS)
    edges = []
    for line, row in _rows(frame):
        edges.append(
            Edge(
                id=row["edge_id"].strip(),
                source=row["from"].strip(),
                target=row["to"].strip(),
                time_s=_parse(row["time_s"], _finite, path, line, "time_s"),
                bidirectional=_parse(row["bidirectional"], _bool, path, line, "bidirectional"),
                footprint=_parse(row["footprint"], parse_cells, path, line, "footprint"),
            )
        )
    return edges


def read_pois(path: Union[str, Path]) -> list[Poi]:
    frame = _read(path, POI_COLUMNS)
    pois = []
    for line, row in _rows(frame):
        category = row["category"].strip()
        if not category:
            raise ScenarioParseError("category: must not be empty", str(path), line)
        pois.append(Poi(id=row["poi_id"].strip(), category=category, node=row["node_id"].strip()))
    return pois


def read_zones(path: Union[str, Path]) -> list[Zone]:
    frame = _read(path, ZONE_COLUMNS)
    zones = []
    for line, row in _rows(frame):
        population = _parse(row["population"], _finite, path, line, "population")
        if not population > 0:
            raise ScenarioParseError("population: must be > 0", str(path), line)
        zones.append(
            Zone(
                id=row["zone_id"].strip(),
                name=row["name"].strip(),
                population=population,
                centroid=row["centroid_node"].strip(),
                cells=frozenset(_parse(row["cells"], parse_cells, path, line, "cells")),
                edges=frozenset(_id_list(row["edges"])),
            )
        )
    return zones


def read_survey(path: Union[str, Path]) -> list[SurveyRow]:
    frame = _read(path, ["satisfied"])
    categories = [c for c in frame.columns if c != "satisfied"]
    rows = []
    for line, row in _rows(frame):
        label = _parse(row["satisfied"], int, path, line, "satisfied")
        if label not in (0, 1):
            raise ScenarioParseError("satisfied: must be 0 or 1", str(path), line)
        rows.append(
            SurveyRow(
                features={c: _parse(row[c], _finite, path, line, c) for c in categories},
                satisfied=label,
            )
        )
    return rows


def _write(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, lineterminator="\n")
    return target


def write_nodes(path: Union[str, Path], graph: TransportGraph) -> Path:
    records = []
    for node in graph.nodes.values():
        record: dict[str, Any] = {"node_id": node.id, "x": node.x, "y": node.y}
        record["cell_row"] = "" if node.cell is None else node.cell[0]
        record["cell_col"] = "" if node.cell is None else node.cell[1]
        records.append(record)
    return _write(pd.DataFrame(records, columns=NODE_COLUMNS + ["cell_row", "cell_col"]), path)


def write_edges(path: Union[str, Path], graph: TransportGraph) -> Path:
    records = [
        {
            "edge_id": e.id,
            "from": e.source,
            "to": e.target,
            "time_s": e.time_s,
            "bidirectional": str(e.bidirectional).lower(),
            "footprint": format_cells(e.footprint),
        }
        for e in graph.edges.values()
    ]
    return _write(pd.DataFrame(records, columns=EDGE_COLUMNS), path)


def write_pois(path: Union[str, Path], pois: Iterable[Poi]) -> Path:
    records = [{"poi_id": p.id, "category": p.category, "node_id": p.node} for p in pois]
    return _write(pd.DataFrame(records, columns=POI_COLUMNS), path)


def write_zones(path: Union[str, Path], zones: Iterable[Zone]) -> Path:
    records = [
        {
            "zone_id": z.id,
            "name": z.name,
            "population": z.population,
            "centroid_node": z.centroid,
            "cells": format_cells(sorted(z.cells)),
            "edges": ";".join(sorted(z.edges)),
        }
        for z in zones
    ]
    return _write(pd.DataFrame(records, columns=ZONE_COLUMNS), path)


def write_survey(path: Union[str, Path], rows: Sequence[SurveyRow]) -> Path:
    categories = sorted(rows[0].features) if rows else []
    records = [{"satisfied": r.satisfied, **{c: r.features[c] for c in categories}} for r in rows]
    return _write(pd.DataFrame(records, columns=["satisfied", *categories]), path)


def write_learning_curve(
    path: Union[str, Path], curve: Sequence[tuple[int, float, float]]
) -> Path:
    """`episode,return,epsilon`, one row per training episode."""
    return _write(pd.DataFrame(list(curve), columns=["episode", "return", "epsilon"]), path)


def read_learning_curve(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)


def write_records(
    path: Union[str, Path],
    records: Sequence[dict[str, Any]],
    columns: Optional[Sequence[str]] = None,
) -> Path:
    """Command outputs (QoL maps, accessibility, rain samples, returns) as CSV."""
    return _write(pd.DataFrame(list(records), columns=columns), path)
