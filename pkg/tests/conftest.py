import os

# --- Set environment variables BEFORE importing climadapt ---
# Settings are validated on import; keep tests away from the developer's
# cfg.yml log directory and progress bars.
if "CLIMADAPT_ENVIRONMENT" not in os.environ:
    os.environ["CLIMADAPT_ENVIRONMENT"] = "Test"
os.environ.setdefault("LOGGING__FILE_LOGGING", "false")
os.environ.setdefault("RUNTIME__PROGRESS_BAR", "false")

import importlib
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, Optional

import pytest
from pydantic import ValidationError
from pytest import MonkeyPatch

from climadapt import config as config_module
from climadapt import logging, monitoring
from climadapt.scenario import Scenario, load_scenario

TOY_CITY = Path(__file__).resolve().parents[1] / "scenarios" / "toy_city"


@pytest.fixture
def reload_settings(monkeypatch: MonkeyPatch) -> Any:
    """
    Fixture to force a reload of the config module and
    all dependent modules *after* setting new env vars.
    """

    def _set_env_and_reload(vars_dict: dict[str, str]) -> None:
        for k, v in vars_dict.items():
            if v == "":
                monkeypatch.delenv(k, raising=False)
            else:
                monkeypatch.setenv(k, v)

        config_module.get_settings.cache_clear()
        try:
            importlib.reload(config_module)
            importlib.reload(logging)
            importlib.reload(monitoring)
        except ValidationError:
            raise  # Re-raise it for the test
        except Exception as e:
            print(f"Reloading failed: {e}")

    yield _set_env_and_reload

    # --- Teardown (after test) ---
    config_module.get_settings.cache_clear()
    try:
        importlib.reload(config_module)
        importlib.reload(logging)
        importlib.reload(monitoring)
    except Exception:
        pass


@pytest.fixture(scope="session")
def toy_config_path() -> Path:
    return TOY_CITY / "config.yml"


@pytest.fixture(scope="session")
def toy_scenario(toy_config_path: Path) -> Scenario:
    return load_scenario(toy_config_path)


def constant_rain(mm: float) -> dict[str, Any]:
    """A deterministic rainfall section: every draw gives `mm`."""
    return {
        "scenario_name": f"constant-{mm}",
        "tables": [{"anchor_year": 2023, "points": [[0.0, mm], [1.0, mm]]}],
    }


ScenarioFactory = Callable[..., Scenario]


@pytest.fixture
def make_scenario(toy_scenario: Scenario) -> ScenarioFactory:
    """
    Variants of the toy scenario: constant rain, a shorter horizon, fewer
    measures, other reward weights or agent settings.
    """

    def _make(
        rain_mm: Optional[float] = None,
        years: Optional[tuple[int, int]] = None,
        measures: Optional[Sequence[str]] = None,
        reward: Optional[tuple[float, float, float]] = None,
        agent: Optional[dict[str, Any]] = None,
        discount: Optional[float] = None,
        **sections: Any,
    ) -> Scenario:
        data = toy_scenario.config.model_dump()
        if rain_mm is not None:
            data["rainfall"] = constant_rain(rain_mm)
        if years is not None:
            data["env"]["start_year"], data["env"]["end_year"] = years
        if measures is not None:
            data["env"]["available_measures"] = list(measures)
        if reward is not None:
            beta_q, beta_a, beta_m = reward
            data["env"]["reward"] = {"beta_q": beta_q, "beta_a": beta_a, "beta_m": beta_m}
        if discount is not None:
            data["env"]["discount"] = discount
        if agent is not None:
            data["agent"].update(agent)
        for name, section in sections.items():
            data[name].update(section)
        return toy_scenario.with_config(config_module.ScenarioConfig.model_validate(data))

    return _make
