from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Minibatch:
    obs: list[np.ndarray]  # per device, S x |M_k|
    actions: np.ndarray  # S x K action indices
    rewards: np.ndarray  # S x K
    next_obs: list[np.ndarray]  # per device, S x |M_k|

    def __len__(self):
        return self.actions.shape[0]

    def rows(self, start: int, stop: int) -> "Minibatch":
        return Minibatch(
            [o[start:stop] for o in self.obs],
            self.actions[start:stop],
            self.rewards[start:stop],
            [o[start:stop] for o in self.next_obs],
        )


class ReplayBuffer:
    """Bounded FIFO of joint transitions, stored in preallocated ring arrays.

    A transition is (o_k, a_k, r_k, o'_k) for every device k.
    """

    def __init__(self, capacity: int, obs_sizes: list[int]):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self.obs_sizes = list(obs_sizes)
        self._splits = np.cumsum(self.obs_sizes)[:-1]
        width = int(sum(self.obs_sizes))
        n = len(self.obs_sizes)
        self._obs = np.zeros((capacity, width), dtype=np.int8)
        self._next = np.zeros((capacity, width), dtype=np.int8)
        self._act = np.zeros((capacity, n), dtype=np.intp)
        self._rew = np.zeros((capacity, n))
        self._head = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, obs, actions, rewards, next_obs) -> None:
        """Store one joint transition; ``obs``/``next_obs`` are per-device vectors."""
        if len(actions) != len(self.obs_sizes) or len(rewards) != len(self.obs_sizes):
            raise ValueError("joint transition must cover every device")
        i = self._head
        self._obs[i] = np.concatenate(obs)
        self._next[i] = np.concatenate(next_obs)
        self._act[i] = actions
        self._rew[i] = rewards
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _ordered(self) -> np.ndarray:
        """Storage rows from oldest to newest."""
        start = self._head if self._size == self.capacity else 0
        return (start + np.arange(self._size)) % self.capacity

    def gather(self, rows: np.ndarray) -> Minibatch:
        return Minibatch(
            obs=np.split(self._obs[rows], self._splits, axis=1),
            actions=self._act[rows],
            rewards=self._rew[rows],
            next_obs=np.split(self._next[rows], self._splits, axis=1),
        )

    def contents(self) -> Minibatch:
        return self.gather(self._ordered())

    def sample_rows(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if size < 1:
            raise ValueError("minibatch size must be positive")
        if size > self._size:
            raise ValueError(f"cannot sample {size} transitions from a buffer holding {self._size}")
        # rows 0.._size-1 are always the filled ones, so uniform picks need no remapping
        return rng.choice(self._size, size=size, replace=False)

    def sample(self, size: int, rng: np.random.Generator) -> Minibatch:
        return self.gather(self.sample_rows(size, rng))
