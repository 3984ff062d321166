"""Tabular Q-learning with epsilon-greedy exploration."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, InvalidStateError

DEFAULT_ACTIONS = (0.1, 0.5, 1.0, 2.0, 7.0)


@dataclass(frozen=True)
class AgentConfig:
    learning_rate_alpha: float = 0.5
    exploration_rate_eps0: float = 0.5
    exploration_decay: float = 0.9
    discount_gamma: float = 0.6
    actions: tuple[float, ...] = DEFAULT_ACTIONS
    reward_scale: float = -1000.0

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(float(a) for a in self.actions))
        for name in ("learning_rate_alpha", "exploration_rate_eps0", "exploration_decay", "discount_gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        if not self.actions:
            raise InvalidParameterError("action set is empty")
        if any(a < 0 for a in self.actions):
            raise InvalidParameterError("actions (k values) must be >= 0")
        if not self.reward_scale < 0:
            raise InvalidParameterError("reward_scale must be negative")


def default_agent_config() -> AgentConfig:
    return AgentConfig()


@dataclass
class QTable:
    n_states: int
    n_actions: int
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise InvalidParameterError("Q-table dimensions must be positive")
        if self.values is None:
            self.values = np.zeros((self.n_states, self.n_actions))
        else:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.shape != (self.n_states, self.n_actions):
                raise InvalidParameterError(
                    f"values shape {self.values.shape} != ({self.n_states}, {self.n_actions})"
                )

    def _check(self, state: int, action: int | None = None) -> None:
        if not 0 <= state < self.n_states:
            raise InvalidStateError(f"state {state} out of range [0, {self.n_states})")
        if action is not None and not 0 <= action < self.n_actions:
            raise InvalidStateError(f"action {action} out of range [0, {self.n_actions})")

    def copy(self) -> "QTable":
        return QTable(self.n_states, self.n_actions, self.values.copy())

    def save(self, path: str | Path) -> None:
        """Space-separated text matrix: one row per state, one column per action."""
        np.savetxt(path, self.values, fmt="%.17g", delimiter=" ")

    @classmethod
    def load(cls, path: str | Path) -> "QTable":
        path = Path(path)
        if not path.is_file():
            raise InvalidInputError(f"Q-table file not found: {path}")
        try:
            values = np.loadtxt(path, ndmin=2, comments="#")
        except ValueError as exc:
            raise InvalidInputError(f"malformed Q-table {path}: {exc}") from None
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise InvalidInputError(f"malformed Q-table {path}")
        return cls(values.shape[0], values.shape[1], values)


def reward(apl: float, rpl: float, scale: float = -1000.0) -> float:
    return scale * (apl - rpl) ** 2


def select_action(q: QTable, state: int, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    q._check(state)
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(q.n_actions))
    return int(np.argmax(q.values[state]))


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float) -> QTable:
    """One temporal-difference update of Q(s, a), in place; returns ``q``."""
    q._check(s, a)
    q._check(s_next)
    target = r + gamma * q.values[s_next].max()
    q.values[s, a] += alpha * (target - q.values[s, a])
    return q


def decay_exploration(eps0: float, decay: float, episode: int) -> float:
    if episode < 0:
        raise InvalidParameterError("episode must be >= 0")
    return eps0 * decay**episode


def greedy_policy(q: QTable) -> np.ndarray:
    return np.argmax(q.values, axis=1)


class QAgent:
    """Q-table plus its hyperparameters and action set."""

    def __init__(self, config: AgentConfig, n_states: int, q: QTable | None = None):
        self.config = config
        self.q = q if q is not None else QTable(n_states, len(config.actions))
        if self.q.n_actions != len(config.actions):
            raise InvalidParameterError("Q-table width does not match the action set")

    def epsilon(self, episode: int) -> float:
        return decay_exploration(self.config.exploration_rate_eps0, self.config.exploration_decay, episode)

    def act(self, state: int, eps: float, rng: np.random.Generator) -> int:
        return select_action(self.q, state, eps, rng)

    def learn(self, s: int, a: int, apl_next: float, rpl_next: float, s_next: int) -> float:
        r = reward(apl_next, rpl_next, self.config.reward_scale)
        q_update(self.q, s, a, r, s_next, self.config.learning_rate_alpha, self.config.discount_gamma)
        return r
