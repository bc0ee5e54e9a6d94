"""
ESRI ASCII grid reader and writer.

Header keys are case-insensitive; `NODATA_VALUE` is optional and
`XLLCENTER`/`YLLCENTER` are accepted in place of the corner keys (converted to
corners on read). Row 0 of the data block is the northernmost row.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..exceptions import ScenarioParseError
from ..terrain.grid import DemGrid, DepthRaster

logger = logging.getLogger(__name__)

_HEADER_KEYS = {
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "xllcenter",
    "yllcenter",
    "cellsize",
    "nodata_value",
}


def _number(token: str, path: str, line: int, key: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ScenarioParseError(f"{key}: not a number: {token!r}", path, line) from None


def read_esri_ascii(path: Union[str, Path]) -> DemGrid:
    """
    Reads an ESRI ASCII grid into a DemGrid.

    Raises:
        ScenarioParseError: With file and line for any malformed content.
    """
    path_str = str(path)
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ScenarioParseError(f"cannot read file: {e}", path_str) from e

    header: dict[str, float] = {}
    lineno = 0
    while lineno < len(lines):
        tokens = lines[lineno].split()
        if not tokens:
            lineno += 1
            continue
        key = tokens[0].lower()
        if key not in _HEADER_KEYS:
            break
        if len(tokens) != 2:
            raise ScenarioParseError(
                "header line must be '<KEY> <value>'", path_str, lineno + 1
            )
        if key in header:
            raise ScenarioParseError(f"duplicate header key {tokens[0]}", path_str, lineno + 1)
        header[key] = _number(tokens[1], path_str, lineno + 1, tokens[0])
        lineno += 1

    for required in ("ncols", "nrows", "cellsize"):
        if required not in header:
            raise ScenarioParseError(f"missing header key {required.upper()}", path_str)
    ncols, nrows = header["ncols"], header["nrows"]
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise ScenarioParseError("NCOLS and NROWS must be positive integers", path_str)
    ncols_i, nrows_i = int(ncols), int(nrows)
    cellsize = header["cellsize"]
    if not cellsize > 0:
        raise ScenarioParseError("CELLSIZE must be positive", path_str)

    if "xllcorner" in header and "yllcorner" in header:
        xll, yll = header["xllcorner"], header["yllcorner"]
    elif "xllcenter" in header and "yllcenter" in header:
        xll = header["xllcenter"] - cellsize / 2.0
        yll = header["yllcenter"] - cellsize / 2.0
    else:
        raise ScenarioParseError(
            "missing XLLCORNER/YLLCORNER (or XLLCENTER/YLLCENTER)", path_str
        )
    nodata_value = header.get("nodata_value", -9999.0)

    elevation = np.empty((nrows_i, ncols_i))
    row = 0
    for offset, text in enumerate(lines[lineno:], start=lineno + 1):
        tokens = text.split()
        if not tokens:
            continue
        if row >= nrows_i:
            raise ScenarioParseError(f"more than {nrows_i} data rows", path_str, offset)
        if len(tokens) != ncols_i:
            raise ScenarioParseError(
                f"expected {ncols_i} values, found {len(tokens)}", path_str, offset
            )
        elevation[row] = [_number(t, path_str, offset, "value") for t in tokens]
        row += 1
    if row != nrows_i:
        raise ScenarioParseError(
            f"expected {nrows_i} data rows, found {row}", path_str, len(lines)
        )

    nodata = elevation == nodata_value
    dem = DemGrid(
        elevation=np.where(nodata, 0.0, elevation),
        cellsize=cellsize,
        nodata=nodata,
        xllcorner=xll,
        yllcorner=yll,
        nodata_value=nodata_value,
    )
    logger.debug(f"Read {nrows_i}x{ncols_i} grid from {path_str}")
    return dem


def _format_value(value: float) -> str:
    return repr(float(value)) if value != int(value) else str(int(value))


def _write_grid(
    path: Union[str, Path],
    values: np.ndarray,
    cellsize: float,
    xllcorner: float,
    yllcorner: float,
    nodata_value: float,
    nodata: Optional[np.ndarray],
) -> Path:
    nrows, ncols = values.shape
    out = [
        f"NCOLS {ncols}",
        f"NROWS {nrows}",
        f"XLLCORNER {_format_value(xllcorner)}",
        f"YLLCORNER {_format_value(yllcorner)}",
        f"CELLSIZE {_format_value(cellsize)}",
        f"NODATA_VALUE {_format_value(nodata_value)}",
    ]
    mask = nodata if nodata is not None else np.zeros(values.shape, dtype=bool)
    for r in range(nrows):
        out.append(
            " ".join(
                _format_value(nodata_value if mask[r, c] else values[r, c])
                for c in range(ncols)
            )
        )
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(out) + "\n", encoding="utf-8")
    return target


def write_dem(path: Union[str, Path], dem: DemGrid) -> Path:
    """Writes a DEM with round-trip-safe values."""
    return _write_grid(
        path,
        dem.elevation,
        dem.cellsize,
        dem.xllcorner,
        dem.yllcorner,
        dem.nodata_value,
        dem.nodata,
    )


def write_depth(path: Union[str, Path], depth: DepthRaster, dem: DemGrid) -> Path:
    """Writes a depth raster in the georeferencing of its DEM."""
    return _write_grid(
        path,
        depth.depth,
        depth.cellsize,
        dem.xllcorner,
        dem.yllcorner,
        dem.nodata_value,
        depth.nodata,
    )
