"""Stochastic-policy actor-critic with one centralized critic per device.

Actors see only their device's current observation. Each critic sees every
device's observation and one-hot action; the simulator supplies them during
training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import nn
from .encoding import ActionIndexing
from .replay import Minibatch


@dataclass
class MadspgAgent:
    actor: nn.MlpParams
    target_actor: nn.MlpParams
    critic: nn.MlpParams
    target_critic: nn.MlpParams
    indexing: ActionIndexing
    tau: float = 0.99
    gamma: float = 0.9
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3

    def __post_init__(self):
        if self.actor.sizes != self.target_actor.sizes:
            raise ValueError("actor and target actor must have the same shape")
        if self.critic.sizes != self.target_critic.sizes:
            raise ValueError("critic and target critic must have the same shape")
        if self.critic.output_size != 1:
            raise ValueError("critic must output a single value")
        if self.actor.output_size != self.indexing.size:
            raise ValueError("actor output width must equal the action count")

    @classmethod
    def create(
        cls, indexing: ActionIndexing, critic_input_size: int, hidden, rng, **kwargs
    ) -> "MadspgAgent":
        actor = nn.init_mlp([len(indexing.monitored), *hidden, indexing.size], rng)
        critic = nn.init_mlp([critic_input_size, *hidden, 1], rng)
        # targets start as exact copies of the online networks
        return cls(actor, actor, critic, critic, indexing, **kwargs)


def critic_input_size(indexings: Sequence[ActionIndexing]) -> int:
    return sum(len(ix.monitored) + ix.size for ix in indexings)


def critic_input(obs: Sequence[np.ndarray], actions: np.ndarray, indexings: Sequence[ActionIndexing]) -> np.ndarray:
    """All observations, then every device's one-hot action (batch rows)."""
    parts = [np.asarray(o, dtype=float) for o in obs]
    parts += [ix.one_hot(actions[..., i]) for i, ix in enumerate(indexings)]
    return np.concatenate(parts, axis=-1)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row. Zero-probability entries are never returned."""
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cum[..., -1]
    # strict inequality skips zero-mass entries
    return np.argmax(cum > u[..., None], axis=-1)


def policy(actor: nn.MlpParams, obs, mask) -> np.ndarray:
    return nn.masked_softmax(nn.mlp_forward(actor, obs), mask)


def madspg_sample_action(agent: MadspgAgent, obs, mask, rng) -> tuple[int, float]:
    probs = policy(agent.actor, obs, mask)
    a = int(sample_categorical(probs, rng))
    return a, float(np.log(probs[a]))


def target_next_actions(agents: Sequence[MadspgAgent], next_obs: Sequence[np.ndarray], rng) -> np.ndarray:
    """a'_i drawn from each device's target actor on its next observation."""
    cols = []
    for agent, o in zip(agents, next_obs):
        probs = policy(agent.target_actor, o, agent.indexing.masks(o))
        cols.append(sample_categorical(probs, rng))
    return np.stack(cols, axis=-1)


def madspg_critic_update(
    agents: Sequence[MadspgAgent],
    k: int,
    batch: Minibatch,
    rng: Optional[np.random.Generator] = None,
    next_actions: Optional[np.ndarray] = None,
) -> float:
    """One SGD step on the mean squared TD error of device ``k``'s critic.

    ``k`` is a 0-based position in ``agents``. ``next_actions`` may carry
    precomputed target-actor draws; otherwise they are sampled here.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty minibatch")
    agent = agents[k]
    indexings = [a.indexing for a in agents]
    if next_actions is None:
        next_actions = target_next_actions(agents, batch.next_obs, rng)
    q_next = nn.mlp_forward(agent.target_critic, critic_input(batch.next_obs, next_actions, indexings))[:, 0]
    y = batch.rewards[:, k] + agent.gamma * q_next
    trace = nn.forward_trace(agent.critic, critic_input(batch.obs, batch.actions, indexings))
    err = trace[-1][:, 0] - y
    upstream = (2.0 / n) * err[:, None]
    grads = nn.backward_trace(agent.critic, trace, upstream)
    agent.critic = nn.sgd_step(agent.critic, grads, agent.lr_critic)
    return float(np.mean(err * err))


def madspg_actor_update(agents: Sequence[MadspgAgent], k: int, batch: Minibatch, rng) -> float:
    """Score-function ascent step for device ``k``'s actor; returns the estimate's norm.

    Device ``k``'s action is redrawn from its current policy; the others keep
    their buffered actions. The raw critic value weights the score.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty minibatch")
    agent = agents[k]
    obs_k = np.asarray(batch.obs[k], dtype=float)
    mask = agent.indexing.masks(batch.obs[k])
    trace = nn.forward_trace(agent.actor, obs_k)
    probs = nn.masked_softmax(trace[-1], mask)
    a_k = sample_categorical(probs, rng)
    actions = batch.actions.copy()
    actions[:, k] = a_k
    q = nn.mlp_forward(agent.critic, critic_input(batch.obs, actions, [a.indexing for a in agents]))[:, 0]
    # d log pi(a) / d logits = onehot(a) - pi; minimise -J
    score = agent.indexing.one_hot(a_k) - probs
    upstream = -(q / n)[:, None] * score
    grads = nn.backward_trace(agent.actor, trace, upstream)
    agent.actor = nn.sgd_step(agent.actor, grads, agent.lr_actor)
    return grads.norm()


def madspg_soft_update(agent: MadspgAgent) -> None:
    agent.target_actor = nn.soft_update(agent.target_actor, agent.actor, agent.tau)
    agent.target_critic = nn.soft_update(agent.target_critic, agent.critic, agent.tau)
