"""
Exact finite-horizon solution of small explicit MDPs by backward induction.

Used to verify learned policies on enumerable, deterministic-rain instances.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import CapacityError, DomainError

logger = logging.getLogger(__name__)

MAX_STATE_ACTIONS = 1_000_000

Successors = list[tuple[int, float]]  # (next state, probability)


@dataclass
class ExplicitMDP:
    """
    Enumerated states and actions.

    `transitions[s][a]` lists the successors of taking `a` in `s`; `rewards`
    has shape (states, actions); `valid` masks the actions allowed per state
    (all allowed when None). Terminal states are worth zero.
    """

    n_actions: int
    transitions: list[list[Successors]]
    rewards: np.ndarray
    discount: float
    horizon: int
    valid: Optional[np.ndarray] = None
    terminal: Optional[np.ndarray] = None
    state_keys: list[str] = field(default_factory=list)

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def validate(self) -> None:
        if self.n_states * self.n_actions > MAX_STATE_ACTIONS:
            raise CapacityError(
                f"{self.n_states} states x {self.n_actions} actions exceeds "
                f"{MAX_STATE_ACTIONS} state-action pairs"
            )
        if self.rewards.shape != (self.n_states, self.n_actions):
            raise DomainError("rewards must have shape (states, actions)")
        if not 0 <= self.discount <= 1:
            raise DomainError("discount must be in [0, 1]")
        if self.horizon < 0:
            raise DomainError("horizon must be >= 0")
        for s, row in enumerate(self.transitions):
            if len(row) != self.n_actions:
                raise DomainError(f"state {s}: expected {self.n_actions} action entries")
            for a, successors in enumerate(row):
                if not self.allowed(s, a):
                    continue
                total = sum(p for _, p in successors)
                if abs(total - 1.0) > 1e-9:
                    raise DomainError(
                        f"state {s}, action {a}: probabilities sum to {total}"
                    )

    def allowed(self, state: int, action: int) -> bool:
        if self.terminal is not None and self.terminal[state]:
            return False
        return self.valid is None or bool(self.valid[state, action])


@dataclass
class Solution:
    """
    `values[k]` are the optimal values with k steps to go (`values[0]` is
    zero); `policy[k - 1]` is the optimal action with k steps to go (-1 where
    no action is allowed).
    """

    values: np.ndarray
    policy: np.ndarray

    def value(self, state: int, steps_to_go: Optional[int] = None) -> float:
        k = self.values.shape[0] - 1 if steps_to_go is None else steps_to_go
        return float(self.values[k, state])

    def action(self, state: int, steps_to_go: int) -> int:
        return int(self.policy[steps_to_go - 1, state])


def backup(mdp: ExplicitMDP, next_values: np.ndarray) -> np.ndarray:
    """Action values Q(s, a) = r(s, a) + gamma * E[V(s')]; -inf where not allowed."""
    q = np.full((mdp.n_states, mdp.n_actions), -np.inf)
    for s, row in enumerate(mdp.transitions):
        for a, successors in enumerate(row):
            if not mdp.allowed(s, a):
                continue
            expected = sum(p * next_values[t] for t, p in successors)
            q[s, a] = mdp.rewards[s, a] + mdp.discount * expected
    return q


def value_iteration(mdp: ExplicitMDP) -> Solution:
    """
    Backward induction over `mdp.horizon` steps; ties go to the lowest action.

    Raises:
        CapacityError: Above the state-action guard.
    """
    mdp.validate()
    values = np.zeros((mdp.horizon + 1, mdp.n_states))
    policy = np.full((mdp.horizon, mdp.n_states), -1, dtype=np.int64)
    for k in range(1, mdp.horizon + 1):
        q = backup(mdp, values[k - 1])
        any_allowed = np.isfinite(q).any(axis=1)
        best = np.argmax(q, axis=1)
        values[k] = np.where(any_allowed, q[np.arange(mdp.n_states), best], 0.0)
        policy[k - 1] = np.where(any_allowed, best, -1)
    logger.debug(
        f"Value iteration: {mdp.n_states} state(s), {mdp.n_actions} action(s), "
        f"horizon {mdp.horizon}"
    )
    return Solution(values=values, policy=policy)
