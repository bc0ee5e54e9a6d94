"""
Annual extreme-rainfall sampling from year-dependent quantile tables.

A table maps non-exceedance probability p to daily rainfall intensity (mm/day)
for one anchor year. Within a table the quantile function is piecewise linear
in p; between anchor years it is interpolated linearly and outside the anchor
span it is clamped to the nearest anchor. One event is drawn per simulated
year and stands for that year's accumulated daily maximum.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from .config import RainfallConfig
from .exceptions import DomainError, ScenarioParseError, ScenarioValidationError

logger = logging.getLogger(__name__)

YEAR_MIN = 2023
YEAR_MAX = 2100


@dataclass(frozen=True)
class QuantileTable:
    """Return levels for one anchor year, as (p, mm/day) points."""

    anchor_year: int
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        where = f"table for anchor year {self.anchor_year}"
        if not YEAR_MIN <= self.anchor_year <= YEAR_MAX:
            raise ScenarioValidationError(
                f"{where}: anchor year outside [{YEAR_MIN}, {YEAR_MAX}]"
            )
        if len(self.points) < 2:
            raise ScenarioValidationError(f"{where}: needs at least two points")
        ps = [p for p, _ in self.points]
        qs = [q for _, q in self.points]
        if not all(math.isfinite(v) for v in ps + qs):
            raise ScenarioValidationError(f"{where}: non-finite value")
        if ps[0] != 0.0 or ps[-1] != 1.0:
            raise ScenarioValidationError(
                f"{where}: probabilities must start at 0.0 and end at 1.0"
            )
        for prev, cur in zip(ps, ps[1:]):
            if cur == prev:
                raise ScenarioValidationError(f"{where}: duplicate quantile p={cur!r}")
            if cur < prev:
                raise ScenarioValidationError(
                    f"{where}: probabilities not increasing at p={cur!r}"
                )
        if any(q < 0 for q in qs):
            raise ScenarioValidationError(f"{where}: negative intensity")
        if any(b < a for a, b in zip(qs, qs[1:])):
            raise ScenarioValidationError(
                f"{where}: intensities must be non-decreasing in p"
            )

    @cached_property
    def probabilities(self) -> np.ndarray:
        return np.array([p for p, _ in self.points], dtype=np.float64)

    @cached_property
    def intensities(self) -> np.ndarray:
        return np.array([q for _, q in self.points], dtype=np.float64)

    def quantile(self, p: float) -> float:
        return float(np.interp(p, self.probabilities, self.intensities))


@dataclass(frozen=True)
class RainfallModel:
    """A rainfall scenario: quantile tables sorted by anchor year."""

    scenario_name: str
    tables: tuple[QuantileTable, ...]
    year_range: tuple[int, int] = field(default=(YEAR_MIN, YEAR_MAX))

    def __post_init__(self) -> None:
        if not self.tables:
            raise ScenarioValidationError("rainfall model needs at least one table")
        years = [t.anchor_year for t in self.tables]
        for prev, cur in zip(years, years[1:]):
            if cur <= prev:
                raise ScenarioValidationError(
                    f"anchor years must be strictly increasing (got {prev} then {cur})"
                )
        lo, hi = self.year_range
        if years[0] < lo or years[-1] > hi:
            raise ScenarioValidationError(
                f"anchor years must lie within [{lo}, {hi}]"
            )

    @cached_property
    def anchor_years(self) -> tuple[int, ...]:
        return tuple(t.anchor_year for t in self.tables)

    @property
    def is_deterministic(self) -> bool:
        """True when every table is constant in p (rain does not depend on draws)."""
        return all(t.intensities[0] == t.intensities[-1] for t in self.tables)


@dataclass(frozen=True)
class RainEvent:
    year: int
    intensity: float  # mm/day

    @property
    def depth_m(self) -> float:
        return self.intensity / 1000.0


def _check_year(model: RainfallModel, year: int) -> None:
    lo, hi = model.year_range
    if not lo <= year <= hi:
        raise DomainError(f"year {year} outside [{lo}, {hi}]")


def quantile(model: RainfallModel, year: int, p: float) -> float:
    """
    The p-quantile of daily rainfall intensity (mm/day) in `year`.

    Raises:
        DomainError: If p is outside [0, 1] or year outside the model range.
    """
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"probability {p!r} outside [0, 1]")
    _check_year(model, year)

    years = model.anchor_years
    if year <= years[0]:
        return model.tables[0].quantile(p)
    if year >= years[-1]:
        return model.tables[-1].quantile(p)

    i = int(np.searchsorted(years, year, side="right")) - 1
    lower, upper = model.tables[i], model.tables[i + 1]
    if year == lower.anchor_year:
        return lower.quantile(p)
    w = (year - lower.anchor_year) / (upper.anchor_year - lower.anchor_year)
    return (1.0 - w) * lower.quantile(p) + w * upper.quantile(p)


def return_level(model: RainfallModel, year: int, return_period_years: float) -> float:
    """Intensity exceeded on average once every `return_period_years` years."""
    if not return_period_years >= 1.0:
        raise DomainError("return period must be at least one year")
    return quantile(model, year, 1.0 - 1.0 / return_period_years)


def sample_event(model: RainfallModel, year: int, rng: np.random.Generator) -> RainEvent:
    """Draws the year's event by inverse-CDF sampling with one uniform draw."""
    u = float(rng.random())
    return RainEvent(year=year, intensity=quantile(model, year, u))


def load_rainfall_model(source: Union[RainfallConfig, Mapping[str, Any]]) -> RainfallModel:
    """
    Builds a validated RainfallModel from the `rainfall` config section.

    Raises:
        ScenarioParseError: If the section does not match the schema.
        ScenarioValidationError: If a table violates an invariant; the message
            names the offending table.
    """
    # Plain data: sections may come from a reloaded copy of the config module.
    data = source.model_dump() if isinstance(source, BaseModel) else source
    try:
        config = RainfallConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in ("rainfall", *first["loc"]))
        raise ScenarioParseError(f"{loc}: {first['msg']}") from e

    tables = []
    for index, table in enumerate(config.tables):
        try:
            tables.append(
                QuantileTable(
                    anchor_year=table.anchor_year,
                    points=tuple((float(p), float(q)) for p, q in table.points),
                )
            )
        except ScenarioValidationError as e:
            raise ScenarioValidationError(f"rainfall.tables[{index}]: {e}") from e

    model = RainfallModel(scenario_name=config.scenario_name, tables=tuple(tables))
    logger.debug(
        f"Rainfall model '{model.scenario_name}' loaded with "
        f"{len(model.tables)} table(s), anchors {model.anchor_years}"
    )
    return model


def rainfall_model_to_config(model: RainfallModel) -> dict[str, Any]:
    """Plain-data form of the model, as it appears in the run config."""
    return {
        "scenario_name": model.scenario_name,
        "tables": [
            {
                "anchor_year": t.anchor_year,
                "points": [[p, q] for p, q in t.points],
            }
            for t in model.tables
        ],
    }
