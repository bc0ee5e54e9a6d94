"""
Q-table checkpoints.

A versioned, sorted, tab-separated text file:

    #qtable<TAB>v1<TAB>actions=K
    <state key><TAB>v0,v1,...,v(K-1)

Values are written with `repr`, so a checkpoint reloads to the exact table.
"""

from pathlib import Path
from typing import Union

from ..agents.qtable import QTable
from ..exceptions import ScenarioParseError

MAGIC = "#qtable"
VERSION = "v1"


def write_qtable(path: Union[str, Path], table: QTable) -> Path:
    lines = [f"{MAGIC}\t{VERSION}\tactions={table.n_actions}"]
    for state in table.states():
        values = ",".join(repr(float(v)) for v in table.values(state))
        lines.append(f"{state}\t{values}")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def read_qtable(path: Union[str, Path]) -> QTable:
    path_str = str(path)
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ScenarioParseError(f"cannot read file: {e}", path_str) from e
    if not lines:
        raise ScenarioParseError("empty checkpoint", path_str, 1)

    header = lines[0].split("\t")
    if len(header) != 3 or header[0] != MAGIC or not header[2].startswith("actions="):
        raise ScenarioParseError("not a Q-table checkpoint", path_str, 1)
    if header[1] != VERSION:
        raise ScenarioParseError(f"unsupported checkpoint version {header[1]!r}", path_str, 1)
    try:
        n_actions = int(header[2].removeprefix("actions="))
    except ValueError:
        raise ScenarioParseError("bad action count", path_str, 1) from None

    table = QTable(n_actions)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        state, sep, values = line.partition("\t")
        if not sep:
            raise ScenarioParseError("expected '<state>\\t<values>'", path_str, lineno)
        try:
            numbers = [float(v) for v in values.split(",")]
        except ValueError:
            raise ScenarioParseError("non-numeric value", path_str, lineno) from None
        if len(numbers) != n_actions:
            raise ScenarioParseError(
                f"expected {n_actions} values, found {len(numbers)}", path_str, lineno
            )
        for action, value in enumerate(numbers):
            table.set(state, action, value)
    return table
