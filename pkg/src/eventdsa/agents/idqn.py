"""Independent deep Q-learning, one online network per device, no replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from .encoding import ActionIndexing, HistoryWindow


@dataclass
class IdqnAgent:
    q_params: nn.MlpParams
    indexing: ActionIndexing
    epsilon: float = 0.9
    epsilon_min: float = 0.05
    gamma: float = 0.9
    lr: float = 1e-4

    def __post_init__(self):
        if not self.epsilon_min <= self.epsilon <= 1.0:
            raise ValueError(f"need epsilon_min <= epsilon <= 1, got {self.epsilon_min}, {self.epsilon}")
        if self.q_params.output_size != self.indexing.size:
            raise ValueError("Q-network output width must equal the action count")

    @classmethod
    def create(cls, indexing: ActionIndexing, window: int, hidden, rng, **kwargs) -> "IdqnAgent":
        obs_size = len(indexing.monitored)
        n_in = window * (obs_size + indexing.size) + obs_size
        params = nn.init_mlp([n_in, *hidden, indexing.size], rng)
        return cls(params, indexing, **kwargs)


def q_input(history: HistoryWindow, obs) -> np.ndarray:
    """History features followed by the current observation as its own block."""
    return np.concatenate([history.features(), np.asarray(obs, dtype=float)])


def masked_argmax(values: np.ndarray, mask) -> int:
    """Argmax over feasible entries; ties go to the lowest index."""
    return int(np.argmax(np.where(np.asarray(mask, dtype=bool), values, -np.inf)))


def epsilon_greedy(q_values: np.ndarray, mask, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        feasible = np.flatnonzero(mask)
        return int(feasible[rng.integers(feasible.size)])
    return masked_argmax(q_values, mask)


def idqn_select_action(agent: IdqnAgent, history: HistoryWindow, obs, mask, rng) -> int:
    q = nn.mlp_forward(agent.q_params, q_input(history, obs))
    return epsilon_greedy(q, mask, agent.epsilon, rng)


def td_step(agent: IdqnAgent, x: np.ndarray, action: int, reward: float, x_next: np.ndarray, next_mask) -> float:
    """One SGD step on (y - Q(x, action))^2 with y held fixed; returns the pre-step loss."""
    q_next = nn.mlp_forward(agent.q_params, x_next)
    target = reward + agent.gamma * float(np.max(q_next[np.asarray(next_mask, dtype=bool)]))
    trace = nn.forward_trace(agent.q_params, x)
    err = trace[-1][action] - target
    upstream = np.zeros(agent.indexing.size)
    upstream[action] = 2.0 * err
    grads = nn.backward_trace(agent.q_params, trace, upstream)
    agent.q_params = nn.sgd_step(agent.q_params, grads, agent.lr)
    return err * err


def idqn_update(
    agent: IdqnAgent,
    history: HistoryWindow,
    obs,
    action: int,
    reward: float,
    next_history: HistoryWindow,
    next_obs,
    next_mask,
) -> float:
    return td_step(agent, q_input(history, obs), action, reward, q_input(next_history, next_obs), next_mask)


def epsilon_decay(epsilon: float, decay: float, epsilon_min: float) -> float:
    if not 0.0 < decay < 1.0:
        raise ValueError(f"decay factor must lie in (0, 1), got {decay}")
    return max(epsilon * decay, epsilon_min)


def epsilon_square(epsilon: float, epsilon_min: float) -> float:
    """The squaring schedule, kept for fidelity experiments; collapses within a few steps."""
    return max(epsilon * epsilon, epsilon_min)
