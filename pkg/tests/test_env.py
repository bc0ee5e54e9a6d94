import itertools
from pathlib import Path

import numpy as np
import pytest

from climadapt.actions import (
    INSTALLABLE,
    InstalledMeasures,
    MeasureContext,
    MeasureKind,
    derive_parameters,
)
from climadapt.env import (
    AdaptationEnv,
    RewardWeights,
    StepInfo,
    assess_year,
    build_explicit_mdp,
    encode_state,
    info_to_dict,
)
from climadapt.exceptions import DomainError, ScenarioValidationError, StateError
from climadapt.formats.trace import TRACE_VERSION, TraceWriter, read_trace

TWO_MEASURES = ("RetentionBasin", "RoadElevation")


def _index(env: AdaptationEnv, label: str) -> int:
    return [env.action_label(i) for i in range(env.n_actions)].index(label)


def _rains(env: AdaptationEnv, seed: int, steps: int = 12) -> list[float]:
    env.reset(seed)
    return [env.step(0).info.rain_mm for _ in range(steps)]


def test_initial_observation(toy_scenario) -> None:
    env = AdaptationEnv(toy_scenario)

    assert env.reset(3) == "0:0000000.0000000"
    assert env.valid_actions().all()
    assert env.n_actions == 1 + 2 * len(INSTALLABLE)
    assert env.action_label(0) == "NoOp"


def test_action_enumeration_is_zone_major(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(measures=TWO_MEASURES))

    labels = [env.action_label(i) for i in range(env.n_actions)]

    assert labels == [
        "NoOp",
        "RetentionBasin@W",
        "RoadElevation@W",
        "RetentionBasin@E",
        "RoadElevation@E",
    ]


def test_full_horizon_is_78_steps(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=4.0))
    env.reset(0)

    steps = 0
    done = False
    while not done:
        done = env.step(0).done
        steps += 1

    assert steps == 78
    assert env.done
    with pytest.raises(StateError):
        env.step(0)


def test_dry_reward_is_total_qol(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=4.0, years=(2023, 2027), reward=(1.0, 0.0, 0.0)))
    env.reset(0)

    rewards = [env.step(0).reward for _ in range(5)]

    assert rewards == pytest.approx([0.85] * 5)


def test_flooded_bridge_lowers_qol(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=30.0, years=(2023, 2024), reward=(1.0, 0.0, 0.0)))
    env.reset(0)

    result = env.step(0)

    assert result.reward == pytest.approx(0.425)
    assert result.info.qol == pytest.approx({"W": 0.1, "E": 0.325})
    assert result.info.flooded_cells == 1


def test_reward_charges_costs(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=4.0, years=(2023, 2025), reward=(0.0, 1.0, 1.0)))
    env.reset(0)
    basin = _index(env, "RetentionBasin@W")

    first = env.step(basin)
    second = env.step(0)

    assert first.reward == 105.0
    assert (first.info.capital, first.info.maintenance) == (100.0, 5.0)
    assert first.info.capital_by_zone == {"W": 100.0, "E": 0.0}
    assert second.reward == 5.0


def test_default_weights_scale_costs(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=4.0, years=(2023, 2024)))
    env.reset(0)

    result = env.step(_index(env, "RetentionBasin@W"))

    assert result.reward == pytest.approx(0.85 - 0.105)


def test_duplicate_install_is_rejected(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=4.0, years=(2023, 2030)))
    env.reset(0)
    basin = _index(env, "RetentionBasin@W")
    env.step(basin)

    assert not env.valid_actions()[basin]
    observation = env.observation()
    with pytest.raises(StateError, match="already installed"):
        env.step(basin)
    assert env.observation() == observation


def test_action_out_of_range(toy_scenario) -> None:
    env = AdaptationEnv(toy_scenario)
    env.reset(0)

    with pytest.raises(DomainError):
        env.step(env.n_actions)


def test_step_before_reset(toy_scenario) -> None:
    with pytest.raises(StateError, match="reset"):
        AdaptationEnv(toy_scenario).step(0)


def test_same_seed_same_rain(toy_scenario) -> None:
    env = AdaptationEnv(toy_scenario)

    assert _rains(env, 7) == _rains(env, 7)
    assert _rains(env, 7) != _rains(env, 8)


def test_install_changes_observation(toy_scenario) -> None:
    env = AdaptationEnv(toy_scenario)
    env.reset(0)

    result = env.step(_index(env, "GreenRoof@E"))

    assert result.observation == "1:0000000.0001000"


def test_state_keys_are_distinct() -> None:
    kinds = [MeasureKind(name) for name in TWO_MEASURES]
    pairs = [(zone, kind) for zone in range(2) for kind in kinds]
    keys = set()
    for year in range(3):
        for mask in itertools.product([False, True], repeat=len(pairs)):
            installed = InstalledMeasures.empty(2)
            for (zone, kind), on in zip(pairs, mask):
                if on:
                    installed = installed.with_installed(zone, kind)
            keys.add(encode_state(year, installed))
            assert encode_state(year, installed) == encode_state(
                year, InstalledMeasures(installed.matrix)
            )

    assert len(keys) == 48


def test_assess_year(toy_scenario) -> None:
    context = MeasureContext(
        toy_scenario.dem, toy_scenario.zones, toy_scenario.graph, toy_scenario.catalog
    )
    params = derive_parameters(InstalledMeasures.empty(2), context)

    dry = assess_year(toy_scenario, params, 0.0)
    wet = assess_year(toy_scenario, params, 30.0)

    assert dry.qol == pytest.approx({"W": 0.425, "E": 0.425})
    assert wet.qol == pytest.approx({"W": 0.1, "E": 0.325})
    assert wet.flood.depth[1, 3] == pytest.approx(0.63)
    assert np.isinf(wet.edge_times["bridge"])


def test_trace_records(make_scenario, tmp_path: Path) -> None:
    path = tmp_path / "trace.jsonl"
    with TraceWriter(path) as trace:
        env = AdaptationEnv(make_scenario(rain_mm=30.0, years=(2023, 2025)), trace=trace)
        env.reset(4)
        for _ in range(3):
            env.step(0)

    records = read_trace(path)

    assert [r["year"] for r in records] == [2023, 2024, 2025]
    first = records[0]
    assert first["trace_version"] == TRACE_VERSION
    assert first["episode_seed"] == 4
    assert first["action"] == "NoOp"
    assert first["rain_mm"] == 30.0
    assert set(first["qol"]) == {"W", "E"}
    assert first["flooded_cells"] == 1
    assert {"A", "M", "reward"} <= set(first)


def test_explicit_mdp_needs_constant_rain(toy_scenario) -> None:
    with pytest.raises(ScenarioValidationError, match="deterministic"):
        build_explicit_mdp(AdaptationEnv(toy_scenario))


def test_explicit_mdp_enumerates_reachable_states(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(rain_mm=30.0, years=(2023, 2024), measures=TWO_MEASURES))

    mdp = build_explicit_mdp(env)

    # year 0: 1 state, year 1: 1 + 4 states, year 2 (terminal): 1 + 4 + 6
    assert mdp.n_states == 1 + 5 + 11
    assert mdp.state_keys[0] == "0:0000000.0000000"
    assert mdp.horizon == 2
    mdp.validate()


def test_reward_weights_must_be_finite() -> None:
    with pytest.raises(ScenarioValidationError):
        RewardWeights(beta_q=float("inf"))


def _random_episode(
    env: AdaptationEnv, seed: int, rng: np.random.Generator
) -> list[tuple[int, float, StepInfo]]:
    env.reset(seed)
    steps = []
    done = False
    while not done:
        action = int(rng.choice(np.flatnonzero(env.valid_actions())))
        result = env.step(action)
        steps.append((action, result.reward, result.info))
        done = result.done
    return steps


def test_reward_decomposes_over_random_steps(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(years=(2023, 2032), reward=(0.7, -0.002, -0.01)))
    rng = np.random.default_rng(1)

    checked = 0
    for seed in range(100):
        for _, reward, info in _random_episode(env, seed, rng):
            expected = 0.7 * sum(info.qol.values()) - 0.002 * info.capital - 0.01 * info.maintenance
            assert reward == pytest.approx(expected, rel=1e-12, abs=1e-12)
            assert info.capital == pytest.approx(sum(info.capital_by_zone.values()))
            assert info.maintenance == pytest.approx(sum(info.maintenance_by_zone.values()))
            checked += 1

    assert checked == 1000


def test_same_seed_same_step_infos(make_scenario) -> None:
    env = AdaptationEnv(make_scenario(years=(2023, 2042)))

    first = _random_episode(env, 9, np.random.default_rng(2))
    second = _random_episode(env, 9, np.random.default_rng(2))

    assert [info_to_dict(info) for _, _, info in first] == [
        info_to_dict(info) for _, _, info in second
    ]
    assert [reward for _, reward, _ in first] == [reward for _, reward, _ in second]


def test_qol_only_reward_keeps_zone_ranking(make_scenario) -> None:
    priced = AdaptationEnv(make_scenario(years=(2023, 2042)))
    qol_only = AdaptationEnv(make_scenario(years=(2023, 2042), reward=(1.0, 0.0, 0.0)))

    for seed in range(3):
        a = _random_episode(priced, seed, np.random.default_rng(seed))
        b = _random_episode(qol_only, seed, np.random.default_rng(seed))
        for (_, _, priced_info), (_, reward, info) in zip(a, b):
            ranking = sorted(info.qol, key=lambda z: (-info.qol[z], z))
            assert ranking == sorted(priced_info.qol, key=lambda z: (-priced_info.qol[z], z))
            assert reward == pytest.approx(info.total_qol)


def test_set_state_keeps_episode_seed(make_scenario, tmp_path: Path) -> None:
    path = tmp_path / "trace.jsonl"
    with TraceWriter(path) as trace:
        env = AdaptationEnv(make_scenario(rain_mm=30.0, years=(2023, 2025)), trace=trace)
        env.reset(4)
        env.set_state(2024, InstalledMeasures.empty(2))
        env.step(0)

    assert env.state.episode_seed == 4
    (record,) = read_trace(path)
    assert (record["year"], record["episode_seed"]) == (2024, 4)
