import math
from pathlib import Path

import numpy as np
import pytest

from climadapt.exceptions import DomainError, ScenarioParseError
from climadapt.formats import tables
from climadapt.formats.trace import TRACE_VERSION, TraceWriter, dumps_record, read_trace
from climadapt.rng import StreamPurpose, derive_seeds, make_stream


# --- tables ---
def test_read_edges_parses_footprints_and_direction(tmp_path: Path) -> None:
    path = tmp_path / "edges.csv"
    path.write_text(
        "edge_id,from,to,time_s,bidirectional,footprint\n"
        "ab,A,B,60,false,0:0; 0:1\n"
        "bc,B,C,30.5,yes,\n"
    )

    ab, bc = tables.read_edges(path)

    assert (ab.source, ab.target, ab.time_s, ab.bidirectional) == ("A", "B", 60.0, False)
    assert ab.footprint == ((0, 0), (0, 1))
    assert bc.bidirectional is True
    assert bc.footprint == ()


def test_nodes_without_cells(tmp_path: Path) -> None:
    path = tmp_path / "nodes.csv"
    path.write_text("node_id,x,y\nA,0,0\nB,1.5,2\n")

    nodes = tables.read_nodes(path)

    assert [(n.id, n.x, n.y, n.cell) for n in nodes] == [
        ("A", 0.0, 0.0, None),
        ("B", 1.5, 2.0, None),
    ]


@pytest.mark.parametrize(
    "body, line, fragment",
    [
        ("ab,A,B,sixty,true,\n", 2, "time_s"),
        ("ab,A,B,60,true,\nbc,B,C,inf,true,\n", 3, "time_s"),
        ("ab,A,B,60,maybe,\n", 2, "bidirectional"),
        ("ab,A,B,60,true,0-0\n", 2, "footprint"),
    ],
)
def test_bad_edge_values_name_line_and_column(
    tmp_path: Path, body: str, line: int, fragment: str
) -> None:
    path = tmp_path / "edges.csv"
    path.write_text("edge_id,from,to,time_s,bidirectional,footprint\n" + body)

    with pytest.raises(ScenarioParseError, match=fragment) as excinfo:
        tables.read_edges(path)

    assert excinfo.value.path == str(path)
    assert excinfo.value.line == line


def test_missing_column_is_reported_on_the_header(tmp_path: Path) -> None:
    path = tmp_path / "pois.csv"
    path.write_text("poi_id,node_id\np,A\n")

    with pytest.raises(ScenarioParseError, match="category") as excinfo:
        tables.read_pois(path)

    assert excinfo.value.line == 1


def test_survey_labels_must_be_binary(tmp_path: Path) -> None:
    path = tmp_path / "survey.csv"
    path.write_text("satisfied,park\n1,0.5\n2,0.5\n")

    with pytest.raises(ScenarioParseError, match="0 or 1") as excinfo:
        tables.read_survey(path)

    assert excinfo.value.line == 3


def test_write_records_keeps_column_order(tmp_path: Path) -> None:
    path = tables.write_records(
        tmp_path / "out" / "r.csv", [{"b": 1, "a": 2.5}], columns=["a", "b"]
    )

    assert path.read_text() == "a,b\n2.5,1\n"


# --- traces ---
def test_trace_records_are_versioned_and_json_safe(tmp_path: Path) -> None:
    path = tmp_path / "trace.jsonl"
    with TraceWriter(path) as trace:
        trace.write({"year": 2023, "reward": np.float64(0.5), "times": [math.inf, 1.0]})
        trace.write({"year": 2024, "reward": -math.inf, "times": []})

    records = read_trace(path)

    assert records[0] == {
        "trace_version": TRACE_VERSION,
        "year": 2023,
        "reward": 0.5,
        "times": ["inf", 1.0],
    }
    assert records[1]["reward"] == "-inf"


def test_dumped_records_have_sorted_keys() -> None:
    assert dumps_record({"b": 1, "a": {"d": 2, "c": 3}}) == '{"a": {"c": 3, "d": 2}, "b": 1}'


def test_closed_trace_writer_refuses_records(tmp_path: Path) -> None:
    writer = TraceWriter(tmp_path / "t.jsonl")

    with pytest.raises(RuntimeError):
        writer.write({"year": 2023})


# --- random streams ---
def test_streams_are_reproducible_and_independent() -> None:
    a = make_stream(7, StreamPurpose.RAIN, 0).random(5)

    assert np.array_equal(a, make_stream(7, StreamPurpose.RAIN, 0).random(5))
    assert not np.array_equal(a, make_stream(7, StreamPurpose.RAIN, 1).random(5))
    assert not np.array_equal(a, make_stream(7, StreamPurpose.POLICY, 0).random(5))
    assert not np.array_equal(a, make_stream(8, StreamPurpose.RAIN, 0).random(5))


def test_derived_seeds() -> None:
    seeds = derive_seeds(3, 10)

    assert seeds == derive_seeds(3, 10)
    assert all(0 <= s < 2**32 for s in seeds)
    assert len(set(seeds)) == 10


@pytest.mark.parametrize("master, seed", [(-1, 0), (0, -1)])
def test_negative_seeds_rejected(master: int, seed: int) -> None:
    with pytest.raises(DomainError, match="non-negative"):
        make_stream(master, StreamPurpose.RAIN, seed)
    with pytest.raises(DomainError, match="non-negative"):
        derive_seeds(master, 3, seed=seed)
