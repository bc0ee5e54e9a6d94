"""
Tabular epsilon-greedy Q-learning.

Training is strictly sequential: one environment, one table, episodes in
order. Given the scenario's master seed and the agent seed, the exploration
stream and the per-episode rain seeds are fixed, so two runs produce identical
tables and learning curves.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional, Protocol

import numpy as np
from tqdm import tqdm

from ..config import AgentSection
from ..exceptions import DomainError, with_context
from ..rng import StreamPurpose, derive_seeds, make_stream
from .policies import discounted_return
from .qtable import QTable, q_update

logger = logging.getLogger(__name__)


class TrainableEnv(Protocol):
    """What training needs from an environment."""

    master_seed: int
    n_actions: int
    discount: float

    def reset(self, episode_seed: int = 0) -> str: ...

    def valid_actions(self) -> np.ndarray: ...

    def step(self, action: int) -> Any: ...


class CurvePoint(NamedTuple):
    episode: int
    episode_return: float
    epsilon: float


@dataclass
class TrainingResult:
    table: QTable
    curve: list[CurvePoint] = field(default_factory=list)
    state_visits: Counter[str] = field(default_factory=Counter)
    action_visits: Counter[tuple[str, int]] = field(default_factory=Counter)
    episode_seeds: list[int] = field(default_factory=list)

    @property
    def returns(self) -> list[float]:
        return [p.episode_return for p in self.curve]


def epsilon_at(
    episode: int,
    n_episodes: int,
    start: float = 1.0,
    end: float = 0.05,
    decay_fraction: float = 0.8,
) -> float:
    """Linear decay from `start` to `end` over the first `decay_fraction` of episodes."""
    if not 0 <= end <= start <= 1:
        raise DomainError("need 0 <= epsilon_end <= epsilon_start <= 1")
    decay_episodes = max(1.0, decay_fraction * n_episodes)
    if episode >= decay_episodes:
        return end
    return start + (end - start) * (episode / decay_episodes)


def choose_action(
    table: QTable,
    state: str,
    valid: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Epsilon-greedy over the valid actions; exactly one draw decides exploration."""
    if rng.random() < epsilon:
        candidates = np.flatnonzero(valid)
        return int(candidates[rng.integers(len(candidates))])
    return table.greedy(state, valid)


def train(
    env: TrainableEnv,
    agent: Optional[AgentSection] = None,
    progress: bool = False,
    table: Optional[QTable] = None,
) -> TrainingResult:
    """
    Runs `agent.episodes` epsilon-greedy episodes, updating `table` (a fresh
    one by default) after every step.

    Raises:
        ClimAdaptError: Environment errors, re-raised with episode and step.
    """
    agent = agent or AgentSection()
    gamma = env.discount if agent.discount is None else agent.discount
    if table is None:
        table = QTable(env.n_actions)
    if table.n_actions != env.n_actions:
        raise DomainError(
            f"Q-table has {table.n_actions} actions, environment {env.n_actions}"
        )
    rng = make_stream(env.master_seed, StreamPurpose.EXPLORATION, agent.seed)
    seeds = derive_seeds(env.master_seed, agent.episodes, seed=agent.seed)
    result = TrainingResult(table=table, episode_seeds=seeds)

    logger.info(
        f"Training {agent.episodes} episode(s): alpha={agent.learning_rate}, "
        f"gamma={gamma}, epsilon {agent.epsilon_start}->{agent.epsilon_end}, "
        f"seed {agent.seed}"
    )
    episodes = tqdm(
        range(agent.episodes), desc="train", unit="episode", disable=not progress
    )
    for episode in episodes:
        epsilon = epsilon_at(
            episode,
            agent.episodes,
            agent.epsilon_start,
            agent.epsilon_end,
            agent.epsilon_decay_fraction,
        )
        state = env.reset(seeds[episode])
        rewards: list[float] = []
        done = False
        step = 0
        while not done:
            result.state_visits[state] += 1
            action = choose_action(table, state, env.valid_actions(), epsilon, rng)
            try:
                outcome = env.step(action)
            except Exception as e:
                raise with_context(
                    e, f"episode {episode} (seed {seeds[episode]}), step {step}"
                ) from e
            result.action_visits[(state, action)] += 1
            next_valid = None if outcome.done else env.valid_actions()
            q_update(
                table,
                state,
                action,
                outcome.reward,
                outcome.observation,
                outcome.done,
                agent.learning_rate,
                gamma,
                next_valid,
            )
            rewards.append(outcome.reward)
            state, done = outcome.observation, outcome.done
            step += 1
        episode_return = discounted_return(rewards, gamma)
        result.curve.append(CurvePoint(episode, episode_return, epsilon))
        if progress:
            episodes.set_postfix(ret=f"{episode_return:.3f}", eps=f"{epsilon:.2f}")

    logger.info(
        f"Training done: {len(table)} state(s) in the table, "
        f"last return {result.curve[-1].episode_return:.6f}"
    )
    return result
