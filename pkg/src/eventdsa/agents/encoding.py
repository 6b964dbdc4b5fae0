"""Flat action indices and history features for one device."""

from __future__ import annotations

import numpy as np

from ..env import IDLE, DeviceAction, Transmit


class ActionIndexing:
    """Index 0 is Idle; ``1 + j*T + (t-1)`` is (j-th monitored event, slot t)."""

    def __init__(self, monitored: tuple[int, ...], num_slots: int):
        self.monitored = tuple(monitored)
        self.num_slots = num_slots
        self.size = 1 + len(self.monitored) * num_slots
        self._position = {m: j for j, m in enumerate(self.monitored)}

    def encode(self, action: DeviceAction) -> int:
        if action is IDLE:
            return 0
        m, t = action
        if m not in self._position or not 1 <= t <= self.num_slots:
            raise ValueError(f"{action} is not a valid action for this device")
        return 1 + self._position[m] * self.num_slots + (t - 1)

    def decode(self, index: int) -> DeviceAction:
        if not 0 <= index < self.size:
            raise ValueError(f"action index {index} out of range 0..{self.size - 1}")
        if index == 0:
            return IDLE
        j, t0 = divmod(index - 1, self.num_slots)
        return Transmit(self.monitored[j], t0 + 1)

    def mask(self, obs) -> np.ndarray:
        """Idle is always feasible; transmit entries follow the event's activity bit."""
        obs = np.asarray(obs, dtype=np.int8)
        return np.concatenate(([1], np.repeat(obs, self.num_slots))).astype(np.int8)

    def masks(self, obs_batch: np.ndarray) -> np.ndarray:
        """Row-wise :meth:`mask` for a batch of observations."""
        ones = np.ones((obs_batch.shape[0], 1), dtype=np.int8)
        return np.concatenate([ones, np.repeat(obs_batch.astype(np.int8), self.num_slots, axis=1)], axis=1)

    def one_hot(self, index) -> np.ndarray:
        out = np.zeros(np.shape(index) + (self.size,))
        np.put_along_axis(out, np.asarray(index)[..., None], 1.0, axis=-1)
        return out


class HistoryWindow:
    """The last ``W`` (observation, one-hot action) pairs of one device, newest first.

    Kept directly in flattened form; entries not yet filled during warm-up are zeros.
    """

    def __init__(self, window: int, obs_size: int, indexing: ActionIndexing):
        if window < 1:
            raise ValueError("history window must hold at least one entry")
        self.window = window
        self.obs_size = obs_size
        self.indexing = indexing
        self.entry_size = obs_size + indexing.size
        self._flat = np.zeros(window * self.entry_size)
        self._count = 0

    def __len__(self):
        return self._count

    @property
    def full(self) -> bool:
        return self._count == self.window

    @property
    def feature_size(self) -> int:
        return self._flat.size

    def push(self, obs, action_index: int) -> None:
        e = self.entry_size
        self._flat[e:] = self._flat[:-e]
        self._flat[:e] = 0.0
        self._flat[: self.obs_size] = obs
        self._flat[self.obs_size + action_index] = 1.0
        self._count = min(self._count + 1, self.window)

    def features(self) -> np.ndarray:
        return self._flat.copy()

    def entries(self) -> list[tuple[np.ndarray, int]]:
        """(observation, action index) pairs, newest first."""
        e = self.entry_size
        out = []
        for i in range(self._count):
            chunk = self._flat[i * e : (i + 1) * e]
            out.append((chunk[: self.obs_size].copy(), int(np.argmax(chunk[self.obs_size :]))))
        return out

    def copy(self) -> "HistoryWindow":
        clone = HistoryWindow(self.window, self.obs_size, self.indexing)
        clone._flat = self._flat.copy()
        clone._count = self._count
        return clone
