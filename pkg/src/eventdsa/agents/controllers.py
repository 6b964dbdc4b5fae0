"""Per-algorithm drivers that turn event state into joint actions and learn from outcomes.

A controller owns every device's agent for one run. The frame loop calls
``act`` with the current chains, resolves the frame, then calls ``learn``
with the rewards and the chains of the next frame.

The learning controllers keep network parameters as flat vectors and update
them in place with the compiled kernels; ``*_params`` accessors expose them
as :class:`~eventdsa.nn.MlpParams` views.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from .. import _kernels as K
from .. import nn
from ..env import DeviceAction, EventChainSet, Topology
from .baselines import aloha_actions, tdma_actions
from .encoding import ActionIndexing, HistoryWindow
from .idqn import epsilon_decay, epsilon_square
from .madspg import critic_input_size
from .replay import ReplayBuffer


class Controller:
    learns = False

    def __init__(self, topology: Topology, num_slots: int):
        self.topology = topology
        self.num_slots = num_slots

    def act(self, chains: EventChainSet, rng: np.random.Generator) -> list[DeviceAction]:
        raise NotImplementedError

    def learn(self, rewards: np.ndarray, next_chains: EventChainSet, rng: np.random.Generator) -> None:
        pass

    def end_episode(self) -> None:
        pass

    def observations(self, chains: EventChainSet) -> list[np.ndarray]:
        return [chains.state[self.topology.columns(k)] for k in range(1, self.topology.num_devices + 1)]


class TdmaController(Controller):
    def act(self, chains, rng):
        return tdma_actions(self.topology, chains, self.num_slots, rng)


class AlohaController(Controller):
    def act(self, chains, rng):
        return aloha_actions(self.topology, chains, self.num_slots, rng)


class _IndexedController(Controller):
    def __init__(self, topology: Topology, num_slots: int):
        super().__init__(topology, num_slots)
        self.indexings = [ActionIndexing(ev, num_slots) for ev in topology.monitored]


def _flat_net(sizes, rng):
    theta, shape = nn.flatten(nn.init_mlp(sizes, rng))
    return theta, shape, np.zeros_like(theta)


class IdqnController(_IndexedController):
    """W uniform warm-up frames fill the histories, then epsilon-greedy online TD(0)."""

    learns = True

    def __init__(
        self,
        topology: Topology,
        num_slots: int,
        rng: np.random.Generator,
        window: int = 4,
        hidden: Sequence[int] = (64, 64),
        epsilon: float = 0.9,
        epsilon_min: float = 0.05,
        epsilon_decay: float = 0.995,
        epsilon_schedule: str = "decay",
        gamma: float = 0.9,
        lr: float = 1e-4,
    ):
        super().__init__(topology, num_slots)
        self.window = window
        self.epsilon = epsilon
        self.epsilon_min = epsilon_min
        self.decay = epsilon_decay
        self.schedule = epsilon_schedule
        self.gamma = gamma
        self.lr = lr
        self.histories = [HistoryWindow(window, len(ix.monitored), ix) for ix in self.indexings]
        self.thetas, self.sizes, self.grads = [], [], []
        for ix, hist in zip(self.indexings, self.histories):
            theta, shape, grad = _flat_net([hist.feature_size + len(ix.monitored), *hidden, ix.size], rng)
            self.thetas.append(theta)
            self.sizes.append(shape)
            self.grads.append(grad)
        self._pending = None

    def q_params(self, k: int) -> nn.MlpParams:
        """Device ``k`` (0-based) Q-network as views on the live parameters."""
        return nn.unflatten(self.thetas[k], self.sizes[k])

    def act(self, chains, rng):
        obs = self.observations(chains)
        warm = not self.histories[0].full
        indices, inputs = [], []
        for k, (ix, hist, o) in enumerate(zip(self.indexings, self.histories, obs)):
            mask = ix.mask(o)
            if warm or rng.random() < self.epsilon:
                feasible = np.flatnonzero(mask)
                a = int(feasible[rng.integers(feasible.size)])
            else:
                a = None
            x = None if warm else np.concatenate([hist._flat, o]).reshape(1, -1)
            if a is None:
                q = K.forward(self.thetas[k], self.sizes[k], x)[0]
                a = int(np.argmax(np.where(mask == 1, q, -np.inf)))
            indices.append(a)
            inputs.append(x)
        self._pending = (obs, indices, inputs)
        return [ix.decode(a) for ix, a in zip(self.indexings, indices)]

    def learn(self, rewards, next_chains, rng):
        obs, indices, inputs = self._pending
        next_obs = self.observations(next_chains)
        for k, (ix, hist) in enumerate(zip(self.indexings, self.histories)):
            hist.push(obs[k], indices[k])
            if inputs[k] is None:
                continue
            x_next = np.concatenate([hist._flat, next_obs[k]])
            K.td_step(
                self.thetas[k], self.sizes[k], inputs[k][0], indices[k], float(rewards[k]),
                x_next, ix.mask(next_obs[k]), self.gamma, self.lr, self.grads[k],
            )

    def end_episode(self):
        if self.schedule == "square":
            self.epsilon = epsilon_square(self.epsilon, self.epsilon_min)
        else:
            self.epsilon = epsilon_decay(self.epsilon, self.decay, self.epsilon_min)


class MadspgController(_IndexedController):
    """Stochastic actors on local observations, critics on the joint observation-action."""

    learns = True

    def __init__(
        self,
        topology: Topology,
        num_slots: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (64, 64),
        gamma: float = 0.9,
        tau: float = 0.99,
        lr_actor: float = 1e-4,
        lr_critic: float = 1e-3,
        batch_size: int = 32,
        replay_capacity: int = 10_000,
        warmup: int = 500,
    ):
        super().__init__(topology, num_slots)
        self.gamma = gamma
        self.tau = tau
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.batch_size = batch_size
        self.warmup = max(warmup, batch_size)
        obs_sizes = [len(ix.monitored) for ix in self.indexings]
        self.buffer = ReplayBuffer(replay_capacity, obs_sizes)
        self.action_sizes = np.array([ix.size for ix in self.indexings], dtype=np.int64)
        bounds = np.concatenate([[0], np.cumsum(obs_sizes)])
        self._obs_cols = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        n_critic = critic_input_size(self.indexings)
        self.actor, self.target_actor, self.actor_sizes, self.actor_grads = [], [], [], []
        self.critic, self.target_critic, self.critic_sizes, self.critic_grads = [], [], [], []
        for ix in self.indexings:
            theta, shape, grad = _flat_net([len(ix.monitored), *hidden, ix.size], rng)
            self.actor.append(theta)
            self.target_actor.append(theta.copy())
            self.actor_sizes.append(shape)
            self.actor_grads.append(grad)
            theta, shape, grad = _flat_net([n_critic, *hidden, 1], rng)
            self.critic.append(theta)
            self.target_critic.append(theta.copy())
            self.critic_sizes.append(shape)
            self.critic_grads.append(grad)
        # every possible observation of small devices, for evaluating target actors once per pattern
        self._patterns = [
            np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int8)[:, ::-1].copy()
            if 2**m <= batch_size * len(obs_sizes) else None
            for m in obs_sizes
        ]
        self.updates = 0
        self._pending = None

    def actor_params(self, k: int) -> nn.MlpParams:
        return nn.unflatten(self.actor[k], self.actor_sizes[k])

    def critic_params(self, k: int) -> nn.MlpParams:
        return nn.unflatten(self.critic[k], self.critic_sizes[k])

    def target_actor_params(self, k: int) -> nn.MlpParams:
        return nn.unflatten(self.target_actor[k], self.actor_sizes[k])

    def target_critic_params(self, k: int) -> nn.MlpParams:
        return nn.unflatten(self.target_critic[k], self.critic_sizes[k])

    def policy(self, k: int, obs: np.ndarray, target: bool = False) -> np.ndarray:
        """Action probabilities of device ``k`` for a batch of observations."""
        theta = self.target_actor[k] if target else self.actor[k]
        pats = self._patterns[k]
        if pats is not None and obs.shape[0] > pats.shape[0]:
            table = K.masked_softmax(
                K.forward(theta, self.actor_sizes[k], pats.astype(float)), K.masks_from_obs(pats, self.num_slots)
            )
            return table[obs.astype(np.int64) @ (1 << np.arange(obs.shape[1]))]
        return K.masked_softmax(K.forward(theta, self.actor_sizes[k], obs.astype(float)), K.masks_from_obs(obs, self.num_slots))

    def act(self, chains, rng):
        obs = self.observations(chains)
        indices = []
        for k, o in enumerate(obs):
            probs = self.policy(k, o.reshape(1, -1))
            indices.append(int(K.sample_rows(probs, rng.random(1))[0]))
        self._pending = (obs, indices)
        return [ix.decode(a) for ix, a in zip(self.indexings, indices)]

    def learn(self, rewards, next_chains, rng):
        obs, indices = self._pending
        self.buffer.push(obs, indices, rewards, self.observations(next_chains))
        if len(self.buffer) >= self.warmup:
            self.update(rng)

    def update(self, rng):
        """Per device: critic then actor step on its own minibatch; then soft target updates."""
        S = self.batch_size
        n_dev = len(self.indexings)
        rows = np.concatenate([self.buffer.sample_rows(S, rng) for _ in range(n_dev)])
        buf = self.buffer
        obs_all, next_all = buf._obs[rows], buf._next[rows]
        actions, rewards = buf._act[rows].astype(np.int64), buf._rew[rows]
        # target actors stay fixed through the device loop, so a' is drawn for all batches at once
        next_actions = np.empty_like(actions)
        for i, cols in enumerate(self._obs_cols):
            probs = self.policy(i, next_all[:, cols], target=True)
            next_actions[:, i] = K.sample_rows(probs, rng.random(probs.shape[0]))
        x_all = K.critic_inputs(obs_all, actions, self.action_sizes)
        x_next = K.critic_inputs(next_all, next_actions, self.action_sizes)
        for k in range(n_dev):
            sl = slice(k * S, (k + 1) * S)
            K.critic_step(
                self.critic[k], self.target_critic[k], self.critic_sizes[k], x_all[sl], x_next[sl],
                np.ascontiguousarray(rewards[sl, k]), self.gamma, self.lr_critic, self.critic_grads[k],
            )
            obs_k = np.ascontiguousarray(obs_all[sl, self._obs_cols[k]])
            K.actor_step(
                self.actor[k], self.actor_sizes[k], obs_k.astype(float), K.masks_from_obs(obs_k, self.num_slots),
                rng.random(S), self.critic[k], self.critic_sizes[k], obs_all[sl], actions[sl], k,
                self.action_sizes, self.lr_actor, self.actor_grads[k],
            )
        mix = 1.0 - self.tau
        for k in range(n_dev):
            for target, online in ((self.target_actor[k], self.actor[k]), (self.target_critic[k], self.critic[k])):
                target *= self.tau
                target += mix * online
        self.updates += 1


def make_controller(algorithm: str, topology: Topology, num_slots: int, rng, **hyper) -> Controller:
    if algorithm == "tdma":
        return TdmaController(topology, num_slots)
    if algorithm == "aloha":
        return AlohaController(topology, num_slots)
    if algorithm == "idqn":
        return IdqnController(topology, num_slots, rng, **hyper)
    if algorithm == "madspg":
        return MadspgController(topology, num_slots, rng, **hyper)
    raise ValueError(f"unknown algorithm {algorithm!r}")
