"""Proportional prioritized experience replay over a ring buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BufferTooSmall

PRIORITY_EPS = 1e-3


@dataclass
class Batch:
    index: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray
    weights: np.ndarray  # importance weights, max-normalized


class ReplayBuffer:
    def __init__(
        self,
        capacity: int,
        state_dim: int,
        action_dim: int,
        *,
        alpha: float = 0.6,
        terminal_boost: float = 10.0,
    ) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.terminal_boost = terminal_boost
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.priorities = np.zeros(capacity)
        self.size = 0
        self._next = 0
        self._max_base = 1.0  # largest unboosted priority seen

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward, next_state, terminal, priority: float | None = None) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminal[i] = terminal
        base = self._max_base if priority is None else float(priority)
        self.priorities[i] = base * (self.terminal_boost if terminal else 1.0)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def probabilities(self) -> np.ndarray:
        p = self.priorities[: self.size] ** self.alpha
        return p / p.sum()

    def sample(self, batch: int, rng: np.random.Generator, beta: float = 0.4) -> Batch:
        if batch > self.size:
            raise BufferTooSmall(f"batch {batch} > buffer size {self.size}")
        p = self.priorities[: self.size] ** self.alpha
        cdf = np.cumsum(p)
        total = cdf[-1]
        idx = np.searchsorted(cdf, rng.random(batch) * total, side="right")
        idx = np.minimum(idx, self.size - 1)
        prob = p[idx] / total
        w = (self.size * prob) ** (-beta)
        w = w / w.max()
        return Batch(
            idx,
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.terminal[idx],
            w,
        )

    def update(self, index: np.ndarray, td_error: np.ndarray) -> None:
        base = np.abs(td_error) + PRIORITY_EPS
        self._max_base = max(self._max_base, float(base.max()))
        self.priorities[index] = base * np.where(self.terminal[index], self.terminal_boost, 1.0)
