"""Tabular action values and the one-step Q-learning update."""

import math
from collections.abc import Iterator
from typing import Optional

import numpy as np

from ..exceptions import DomainError


class QTable:
    """
    State key -> action values. Unseen states read as all zeros and are not
    inserted by reads.
    """

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise DomainError("a Q-table needs at least one action")
        self.n_actions = n_actions
        self._values: dict[str, np.ndarray] = {}

    def values(self, state: str) -> np.ndarray:
        stored = self._values.get(state)
        if stored is None:
            return np.zeros(self.n_actions)
        return stored.copy()

    def get(self, state: str, action: int) -> float:
        stored = self._values.get(state)
        return 0.0 if stored is None else float(stored[action])

    def set(self, state: str, action: int, value: float) -> None:
        if not 0 <= action < self.n_actions:
            raise DomainError(f"action {action} outside [0, {self.n_actions})")
        if not math.isfinite(value):
            raise DomainError(f"non-finite Q-value for state {state!r}")
        stored = self._values.get(state)
        if stored is None:
            stored = self._values[state] = np.zeros(self.n_actions)
        stored[action] = value

    def max_value(self, state: str, valid: Optional[np.ndarray] = None) -> float:
        values = self.values(state)
        if valid is not None:
            if not valid.any():
                return 0.0
            values = values[valid]
        return float(values.max())

    def greedy(self, state: str, valid: Optional[np.ndarray] = None) -> int:
        """Highest-valued (valid) action; ties go to the lowest index."""
        values = self.values(state)
        if valid is not None:
            values = np.where(valid, values, -np.inf)
        return int(np.argmax(values))

    def states(self) -> list[str]:
        return sorted(self._values)

    def __contains__(self, state: str) -> bool:
        return state in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self.states())

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QTable) or other.n_actions != self.n_actions:
            return False
        if self.states() != other.states():
            return False
        return all(np.array_equal(self._values[s], other._values[s]) for s in self._values)


def q_update(
    table: QTable,
    state: str,
    action: int,
    reward: float,
    next_state: str,
    done: bool,
    alpha: float,
    gamma: float,
    next_valid: Optional[np.ndarray] = None,
) -> float:
    """
    Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') * [not done] - Q(s,a)).

    `next_valid` restricts the max to the actions allowed in s'. Only entry
    (s, a) changes. Returns the new value.
    """
    if not 0 < alpha <= 1:
        raise DomainError("learning rate must be in (0, 1]")
    if not 0 <= gamma <= 1:
        raise DomainError("discount must be in [0, 1]")
    bootstrap = 0.0 if done else gamma * table.max_value(next_state, next_valid)
    current = table.get(state, action)
    updated = current + alpha * (reward + bootstrap - current)
    table.set(state, action, updated)
    return updated
