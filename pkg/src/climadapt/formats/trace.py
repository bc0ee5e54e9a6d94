"""Episode traces (JSON lines) and run manifests (JSON)."""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import TracebackType
from typing import IO, Any, Optional, Union

from typing_extensions import Self

TRACE_VERSION = 1


def _plain(value: Any) -> Any:
    """JSON-safe copy: infinities become strings, numpy scalars become floats."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return value


def dumps_record(record: dict[str, Any]) -> str:
    return json.dumps(_plain(record), sort_keys=True, allow_nan=False)


class TraceWriter:
    """Writes one JSON object per step; every record carries `trace_version`."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._handle: Optional[IO[str]] = None

    def __enter__(self) -> Self:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8", newline="\n")
        return self

    def write(self, record: dict[str, Any]) -> None:
        if self._handle is None:
            raise RuntimeError("trace writer is not open")
        self._handle.write(dumps_record({"trace_version": TRACE_VERSION, **record}) + "\n")

    def __exit__(
        self,
        exc_type: Optional[type[BaseException]],
        exc_value: Optional[BaseException],
        exc_traceback: Optional[TracebackType],
    ) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def read_trace(path: Union[str, Path]) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_manifest(path: Union[str, Path], manifest: dict[str, Any]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(
        json.dumps(_plain(manifest), sort_keys=True, indent=2, allow_nan=False) + "\n",
        encoding="utf-8",
    )
    return target


def read_manifest(path: Union[str, Path]) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


@dataclass
class RunManifest:
    """What produced a command's outputs, written beside them."""

    tool_version: str
    scenario_fingerprint: str
    master_seed: int
    command: list[str]
    started_at: str
    finished_at: str = ""
    outputs: list[str] = field(default_factory=list)
    parameters: dict[str, Any] = field(default_factory=dict)
    resources: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def write(self, path: Union[str, Path]) -> Path:
        return write_manifest(path, self.to_dict())
