"""Baseline and learned policies, and single-episode rollouts."""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Protocol

import numpy as np

from ..exceptions import DomainError, with_context
from ..rng import StreamPurpose, make_stream
from .qtable import QTable

if TYPE_CHECKING:
    from ..env import AdaptationEnv, StepInfo

logger = logging.getLogger(__name__)

POLICY_NAMES = ("greedy", "random", "do-nothing")


class Policy(Protocol):
    name: str

    def choose(self, observation: str, valid: np.ndarray) -> int: ...


class DoNothingPolicy:
    name = "do-nothing"

    def choose(self, observation: str, valid: np.ndarray) -> int:
        return 0


class RandomPolicy:
    """Uniform over the valid actions, from its own seeded stream."""

    name = "random"

    def __init__(self, master_seed: int, seed: int = 0):
        self.rng = make_stream(master_seed, StreamPurpose.POLICY, seed)

    def choose(self, observation: str, valid: np.ndarray) -> int:
        candidates = np.flatnonzero(valid)
        return int(candidates[self.rng.integers(len(candidates))])


class GreedyPolicy:
    name = "greedy"

    def __init__(self, table: QTable):
        self.table = table

    def choose(self, observation: str, valid: np.ndarray) -> int:
        return self.table.greedy(observation, valid)


@dataclass(frozen=True)
class Transition:
    state: str
    action: int
    reward: float
    next_state: str
    done: bool


@dataclass
class Trajectory:
    discount: float = 1.0
    steps: list[Transition] = field(default_factory=list)
    infos: list["StepInfo"] = field(default_factory=list)

    @property
    def rewards(self) -> list[float]:
        return [t.reward for t in self.steps]

    @property
    def total_return(self) -> float:
        return discounted_return(self.rewards, self.discount)

    @property
    def actions(self) -> list[int]:
        return [t.action for t in self.steps]


def discounted_return(rewards: list[float], discount: float) -> float:
    total, weight = 0.0, 1.0
    for r in rewards:
        total += weight * r
        weight *= discount
    return total


def make_policy(
    name: str, master_seed: int = 0, seed: int = 0, table: Optional[QTable] = None
) -> Policy:
    if name == "do-nothing":
        return DoNothingPolicy()
    if name == "random":
        return RandomPolicy(master_seed, seed)
    if name == "greedy":
        if table is None:
            raise DomainError("the greedy policy needs a Q-table")
        return GreedyPolicy(table)
    raise DomainError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


def rollout(env: "AdaptationEnv", policy: Policy, seed: int = 0) -> Trajectory:
    """Runs one full episode (episode seed `seed`) under `policy`."""
    trajectory = Trajectory(discount=env.discount)
    observation = env.reset(seed)
    done = False
    step = 0
    while not done:
        action = policy.choose(observation, env.valid_actions())
        try:
            result = env.step(action)
        except Exception as e:
            raise with_context(e, f"rollout seed {seed}, step {step}") from e
        trajectory.steps.append(
            Transition(observation, action, result.reward, result.observation, result.done)
        )
        trajectory.infos.append(result.info)
        observation, done = result.observation, result.done
        step += 1
    logger.debug(
        f"Rollout ({policy.name}, seed {seed}): {step} step(s), "
        f"return {trajectory.total_return:.6f}"
    )
    return trajectory
