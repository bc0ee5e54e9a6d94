"""
The yearly adaptation decision process.

Each step installs at most one measure, charges costs, then samples the
year's rain (after the action: adaptation is anticipatory), floods the working
terrain, degrades the network and scores every zone's quality of life:

    R = beta_q * sum_i Q_i + beta_a * A + beta_m * M

Actions are indexed 0 = NoOp, then zone-major over the available measures.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .actions import (
    NOOP,
    Action,
    EnvironmentParams,
    InstalledMeasures,
    MeasureContext,
    derive_parameters,
    zone_costs,
)
from .agents.value_iteration import ExplicitMDP
from .exceptions import DomainError, ScenarioValidationError, StateError
from .formats.trace import TraceWriter
from .qol import qol
from .rainfall import sample_event
from .rng import StreamPurpose, make_stream
from .scenario import Scenario
from .terrain.grid import DepthRaster
from .transport import (
    AccessProfile,
    EdgeTimes,
    effective_edge_times,
    zone_accessibility,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardWeights:
    beta_q: float = 1.0
    beta_a: float = -0.001
    beta_m: float = -0.001

    def __post_init__(self) -> None:
        if not all(math.isfinite(b) for b in (self.beta_q, self.beta_a, self.beta_m)):
            raise ScenarioValidationError("reward weights must be finite")

    def reward(self, total_qol: float, capital: float, maintenance: float) -> float:
        return self.beta_q * total_qol + self.beta_a * capital + self.beta_m * maintenance


@dataclass
class EnvState:
    year: int
    installed: InstalledMeasures
    params: EnvironmentParams
    rng: np.random.Generator
    episode_seed: int = 0


@dataclass(frozen=True)
class StepInfo:
    year: int
    action: str
    rain_mm: float
    qol: dict[str, float]
    capital: float
    maintenance: float
    capital_by_zone: dict[str, float]
    maintenance_by_zone: dict[str, float]
    flooded_cells: int
    outflow_m3: float
    access: dict[str, dict[str, float]]

    @property
    def total_qol(self) -> float:
        return float(sum(self.qol.values()))


@dataclass(frozen=True)
class StepResult:
    observation: str
    reward: float
    done: bool
    info: StepInfo


@dataclass(frozen=True)
class YearAssessment:
    """One rain event pushed through flood, network and quality of life."""

    flood: DepthRaster
    edge_times: EdgeTimes
    profiles: dict[str, AccessProfile]
    qol: dict[str, float]


def encode_state(year_index: int, installed: InstalledMeasures) -> str:
    """Canonical observation key: `<year index>:<install bits per zone>`."""
    return f"{year_index}:{installed.bits()}"


def assess_year(
    scenario: Scenario,
    params: EnvironmentParams,
    intensity_mm: float,
    threshold_s: Optional[float] = None,
) -> YearAssessment:
    """Floods the working terrain with one event and scores every zone."""
    if threshold_s is None:
        threshold_s = scenario.config.transport.access_threshold_s
    flood = params.flood_model.simulate(
        (intensity_mm / 1000.0) * params.rain_field,
        extra_storage=params.storage,
        pumped=params.pumped,
    )
    times = effective_edge_times(
        scenario.graph, flood, scenario.impedance, params.drainage_bonus
    )
    profiles = zone_accessibility(
        scenario.graph,
        scenario.zones,
        scenario.pois,
        times,
        threshold_s,
        scenario.categories,
    )
    scores = {z.id: qol(profiles[z.id], scenario.weights) for z in scenario.zones}
    return YearAssessment(flood=flood, edge_times=times, profiles=profiles, qol=scores)


def trace_record(episode_seed: int, reward: float, info: "StepInfo") -> dict[str, Any]:
    return {
        "episode_seed": episode_seed,
        "year": info.year,
        "action": info.action,
        "rain_mm": info.rain_mm,
        "reward": reward,
        "qol": info.qol,
        "A": info.capital,
        "M": info.maintenance,
        "flooded_cells": info.flooded_cells,
    }


class AdaptationEnv:
    """One episode at a time over the scenario's horizon; single-owner state."""

    def __init__(self, scenario: Scenario, trace: Optional[TraceWriter] = None):
        self.scenario = scenario
        env_cfg = scenario.config.env
        self.start_year = env_cfg.start_year
        self.end_year = env_cfg.end_year
        self.discount = env_cfg.discount
        self.weights = RewardWeights(
            beta_q=env_cfg.reward.beta_q,
            beta_a=env_cfg.reward.beta_a,
            beta_m=env_cfg.reward.beta_m,
        )
        self.threshold = scenario.config.transport.access_threshold_s
        self.context = MeasureContext(
            base_dem=scenario.dem,
            zones=scenario.zones,
            graph=scenario.graph,
            catalog=scenario.catalog,
            open_border=scenario.config.flood.open_border,
        )
        self.actions: list[Action] = [NOOP] + [
            Action(kind, zone)
            for zone in range(len(scenario.zones))
            for kind in scenario.available_measures
        ]
        self.trace = trace
        self._state: Optional[EnvState] = None

    # --- introspection ---
    @property
    def master_seed(self) -> int:
        return self.scenario.master_seed

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def horizon(self) -> int:
        return self.end_year - self.start_year + 1

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise StateError("environment has not been reset")
        return self._state

    @property
    def done(self) -> bool:
        return self.state.year > self.end_year

    def observation(self) -> str:
        state = self.state
        return encode_state(state.year - self.start_year, state.installed)

    def action_label(self, index: int) -> str:
        return self.actions[index].label(self.scenario.zones)

    def valid_actions(self) -> np.ndarray:
        """Mask of actions allowed now; reinstalling a measure is not."""
        installed = self.state.installed
        return np.array(
            [
                a.zone is None or not installed.is_installed(a.zone, a.kind)
                for a in self.actions
            ],
            dtype=bool,
        )

    # --- lifecycle ---
    def reset(self, episode_seed: int = 0) -> str:
        """Starts an episode: first year, nothing installed, fresh rain stream."""
        installed = InstalledMeasures.empty(len(self.scenario.zones))
        self._state = EnvState(
            year=self.start_year,
            installed=installed,
            params=derive_parameters(installed, self.context),
            rng=make_stream(self.scenario.master_seed, StreamPurpose.RAIN, episode_seed),
            episode_seed=episode_seed,
        )
        logger.debug(f"Episode reset with seed {episode_seed}")
        return self.observation()

    def set_state(self, year: int, installed: InstalledMeasures) -> str:
        """Jumps to an arbitrary (year, installs) state, keeping the rain stream."""
        if not self.start_year <= year <= self.end_year + 1:
            raise DomainError(f"year {year} outside the horizon")
        previous = self._state
        if previous is not None:
            rng, episode_seed = previous.rng, previous.episode_seed
        else:
            rng = make_stream(self.scenario.master_seed, StreamPurpose.RAIN, 0)
            episode_seed = 0
        self._state = EnvState(
            year=year,
            installed=installed,
            params=derive_parameters(installed, self.context),
            rng=rng,
            episode_seed=episode_seed,
        )
        return self.observation()

    def step(self, action: int) -> StepResult:
        """
        Advances one year.

        Raises:
            StateError: After the episode is done, or on a duplicate install
                (the year does not advance).
            DomainError: On an action index outside the enumeration.
        """
        state = self.state
        if state.year > self.end_year:
            raise StateError("episode is done; call reset()")
        if not 0 <= action < self.n_actions:
            raise DomainError(f"action {action} outside [0, {self.n_actions})")
        chosen = self.actions[action]
        scenario = self.scenario
        zones = scenario.zones

        # (1)-(2) install and charge costs
        capital_by_zone, maintenance_by_zone = zone_costs(
            state.installed, chosen, scenario.catalog
        )
        if not chosen.is_noop:
            assert chosen.zone is not None
            state.installed = state.installed.with_installed(chosen.zone, chosen.kind)
            state.params = derive_parameters(state.installed, self.context)
        capital = float(sum(capital_by_zone))
        maintenance = float(sum(maintenance_by_zone))

        # (3)-(7) rain, flood, transport and quality of life
        event = sample_event(scenario.rainfall, state.year, state.rng)
        assessed = assess_year(scenario, state.params, event.intensity, self.threshold)
        flood, profiles, qol_by_zone = assessed.flood, assessed.profiles, assessed.qol

        # (8) reward
        total_qol = float(sum(qol_by_zone[z.id] for z in zones))
        reward = self.weights.reward(total_qol, capital, maintenance)

        info = StepInfo(
            year=state.year,
            action=chosen.label(zones),
            rain_mm=event.intensity,
            qol=qol_by_zone,
            capital=capital,
            maintenance=maintenance,
            capital_by_zone={z.id: capital_by_zone[i] for i, z in enumerate(zones)},
            maintenance_by_zone={z.id: maintenance_by_zone[i] for i, z in enumerate(zones)},
            flooded_cells=flood.flooded_cells(),
            outflow_m3=flood.outflow_volume,
            access={z.id: dict(profiles[z.id].values) for z in zones},
        )

        # (9) advance
        state.year += 1
        done = state.year > self.end_year
        observation = self.observation()
        logger.debug(
            f"Year {info.year}: action {info.action}, rain {info.rain_mm:.2f} mm, "
            f"flooded cells {info.flooded_cells}, reward {reward:.6f}"
        )
        if self.trace is not None:
            self.trace.write(trace_record(state.episode_seed, reward, info))
        return StepResult(observation=observation, reward=reward, done=done, info=info)


def build_explicit_mdp(env: AdaptationEnv) -> ExplicitMDP:
    """
    Enumerates every reachable (year, installs) state of a deterministic-rain
    environment into an explicit MDP for exact solution.

    Raises:
        ScenarioValidationError: If the rainfall model is stochastic.
    """
    if not env.scenario.rainfall.is_deterministic:
        raise ScenarioValidationError(
            "explicit MDPs need a deterministic rainfall model (constant tables)"
        )
    start = env.reset(0)
    keys: list[str] = [start]
    index = {start: 0}
    frontier = deque([(env.state.year, env.state.installed)])
    transitions: list[list[list[tuple[int, float]]]] = []
    rewards: list[list[float]] = []
    valid_rows: list[np.ndarray] = []
    terminal: list[bool] = []

    while frontier:
        year, installed = frontier.popleft()
        env.set_state(year, installed)
        is_terminal = year > env.end_year
        terminal.append(is_terminal)
        row_t: list[list[tuple[int, float]]] = [[] for _ in range(env.n_actions)]
        row_r = [0.0] * env.n_actions
        mask = np.zeros(env.n_actions, dtype=bool) if is_terminal else env.valid_actions()
        for a in np.flatnonzero(mask):
            env.set_state(year, installed)
            result = env.step(int(a))
            nxt = result.observation
            if nxt not in index:
                index[nxt] = len(keys)
                keys.append(nxt)
                frontier.append((env.state.year, env.state.installed))
            row_t[int(a)] = [(index[nxt], 1.0)]
            row_r[int(a)] = result.reward
        transitions.append(row_t)
        rewards.append(row_r)
        valid_rows.append(mask)

    logger.info(f"Explicit MDP: {len(keys)} state(s), {env.n_actions} action(s)")
    return ExplicitMDP(
        state_keys=keys,
        n_actions=env.n_actions,
        transitions=transitions,
        rewards=np.array(rewards),
        valid=np.array(valid_rows),
        terminal=np.array(terminal),
        discount=env.discount,
        horizon=env.horizon,
    )


def info_to_dict(info: StepInfo) -> dict[str, Any]:
    return {
        "year": info.year,
        "action": info.action,
        "rain_mm": info.rain_mm,
        "qol": info.qol,
        "A": info.capital,
        "M": info.maintenance,
        "A_by_zone": info.capital_by_zone,
        "M_by_zone": info.maintenance_by_zone,
        "flooded_cells": info.flooded_cells,
        "outflow_m3": info.outflow_m3,
        "access": info.access,
    }
