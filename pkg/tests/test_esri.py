from pathlib import Path

import numpy as np
import pytest

from climadapt.exceptions import ScenarioParseError
from climadapt.formats.esri import read_esri_ascii, write_dem, write_depth
from climadapt.terrain.flood import simulate_flood
from climadapt.terrain.grid import DemGrid


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "grid.asc"
    path.write_text(text)
    return path


def test_reads_toy_dem(toy_scenario) -> None:
    dem = toy_scenario.dem

    assert dem.shape == (3, 7)
    assert dem.cellsize == 10.0
    assert dem.cell_area == 100.0
    assert dem.elevation[1, 3] == 0.0
    assert dem.elevation[0, 0] == 5.0
    assert not dem.nodata.any()


def test_center_keys_and_nodata(tmp_path: Path) -> None:
    path = _write(
        tmp_path,
        "NCOLS 2\nnrows 2\nXLLCENTER 5\nYLLCENTER 5\nCELLSIZE 10\n"
        "NODATA_VALUE -1\n1.5 -1\n2 3\n",
    )

    dem = read_esri_ascii(path)

    assert dem.xllcorner == 0.0 and dem.yllcorner == 0.0
    assert dem.nodata[0, 1]
    assert dem.elevation[0, 0] == 1.5


def test_dem_round_trip(tmp_path: Path) -> None:
    rng = np.random.default_rng(5)
    nodata = np.zeros((4, 5), dtype=bool)
    nodata[2, 3] = True
    dem = DemGrid(
        elevation=rng.uniform(-3.0, 40.0, size=(4, 5)),
        cellsize=2.5,
        nodata=nodata,
        xllcorner=100.25,
        yllcorner=-7.0,
    )

    again = read_esri_ascii(write_dem(tmp_path / "dem.asc", dem))

    assert again.content_hash() == dem.content_hash()


def test_depth_written_in_dem_georeference(tmp_path: Path, toy_scenario) -> None:
    depth = simulate_flood(toy_scenario.dem, 0.03)

    path = write_depth(tmp_path / "out" / "depth.asc", depth, toy_scenario.dem)
    read_back = read_esri_ascii(path)

    assert read_back.shape == (3, 7)
    assert read_back.elevation[1, 3] == pytest.approx(0.63)
    assert read_back.elevation.sum() == pytest.approx(0.63)


@pytest.mark.parametrize(
    "text, message, line",
    [
        ("NCOLS 2\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n1 x\n", "not a number", 6),
        ("NCOLS 2\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n1 2 3\n", "expected 2 values", 6),
        ("NCOLS 2\nNCOLS 2\n", "duplicate header", 2),
    ],
)
def test_malformed_grid_names_line(
    tmp_path: Path, text: str, message: str, line: int
) -> None:
    path = _write(tmp_path, text)

    with pytest.raises(ScenarioParseError, match=message) as excinfo:
        read_esri_ascii(path)

    assert excinfo.value.line == line
    assert excinfo.value.path == str(path)


@pytest.mark.parametrize(
    "text, message",
    [
        ("NROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n1\n", "missing header key NCOLS"),
        ("NCOLS 1\nNROWS 2\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n1\n", "expected 2 data rows"),
        ("NCOLS 1\nNROWS 1\nCELLSIZE 1\n1\n", "XLLCORNER"),
        ("NCOLS 1\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 0\n1\n", "CELLSIZE"),
    ],
)
def test_invalid_headers(tmp_path: Path, text: str, message: str) -> None:
    with pytest.raises(ScenarioParseError, match=message):
        read_esri_ascii(_write(tmp_path, text))


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ScenarioParseError, match="cannot read file"):
        read_esri_ascii(tmp_path / "absent.asc")
