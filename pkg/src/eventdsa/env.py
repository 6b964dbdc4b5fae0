"""Frame game: Markov event dynamics, collision/redundancy resolution, rates and rewards.

Event, device and slot identifiers are 1-based throughout the public API.
Arrays indexed by those identifiers are stored 0-based (``state[m - 1]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from numba import njit


class ContractViolation(ValueError):
    """Raised when a caller breaks a precondition of the frame game."""


class UndefinedMetricError(ValueError):
    """Raised when an average is requested over frames that are all vacuous."""


# ---------------------------------------------------------------------------
# Event chains


@dataclass(frozen=True)
class EventChainSet:
    """Independent two-state chains, one per event.

    ``p[m]`` is the inactive->active switching probability and ``q[m]`` the
    active->inactive one, so the stationary activity is ``p / (p + q)``.
    """

    p: np.ndarray
    q: np.ndarray
    state: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        state = np.asarray(self.state, dtype=np.int8)
        if not (p.shape == q.shape == state.shape) or p.ndim != 1:
            raise ValueError("p, q and state must be 1-D arrays of equal length")
        if np.any((p < 0) | (p > 1)) or np.any((q < 0) | (q > 1)):
            raise ValueError("switching probabilities must lie in [0, 1]")
        if np.any((state != 0) & (state != 1)):
            raise ValueError("event state entries must be 0 or 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "state", state)

    @property
    def num_events(self) -> int:
        return self.state.shape[0]

    def active_events(self) -> tuple[int, ...]:
        return tuple(int(m) + 1 for m in np.flatnonzero(self.state))

    def with_state(self, state) -> "EventChainSet":
        return EventChainSet(self.p, self.q, state)

    def _advance(self, state: np.ndarray) -> "EventChainSet":
        # hot path: state comes from a transition of already-validated chains
        new = object.__new__(EventChainSet)
        object.__setattr__(new, "p", self.p)
        object.__setattr__(new, "q", self.q)
        object.__setattr__(new, "state", state)
        return new

    @classmethod
    def symmetric(cls, num_events: int, mu: float, state=None) -> "EventChainSet":
        """Chains with p = q = (1 - mu) / 2, i.e. lag-1 correlation ``mu``."""
        switch = (1.0 - mu) / 2.0
        p = np.full(num_events, switch)
        if state is None:
            state = np.zeros(num_events, dtype=np.int8)
        return cls(p, p.copy(), state)


def stationary_activity(chains: EventChainSet) -> np.ndarray:
    """Long-run fraction of frames each event is active; 1/2 for frozen chains."""
    total = chains.p + chains.q
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, chains.p / np.where(total > 0, total, 1.0), 0.5)


def draw_stationary(chains: EventChainSet, rng: np.random.Generator) -> EventChainSet:
    """Redraw every event's state independently from its stationary law."""
    state = (rng.random(chains.num_events) < stationary_activity(chains)).astype(np.int8)
    return chains.with_state(state)


def transition_events(chains: EventChainSet, rng: np.random.Generator) -> EventChainSet:
    u = rng.random(chains.num_events)
    flip = np.where(chains.state == 1, u < chains.q, u < chains.p)
    return chains._advance(chains.state ^ flip.astype(np.int8))


def evolve(chains: EventChainSet, steps: int, rng: np.random.Generator) -> np.ndarray:
    """States after each of ``steps`` transitions, shape (steps, M).

    Consumes the generator exactly as ``steps`` calls to :func:`transition_events` would.
    """
    u = rng.random((steps, chains.num_events))
    return _evolve(chains.state.copy(), chains.p, chains.q, u)


@njit(cache=True)
def _evolve(state, p, q, u):
    steps, m = u.shape
    out = np.empty((steps, m), dtype=np.int8)
    for f in range(steps):
        for j in range(m):
            if state[j] == 1:
                if u[f, j] < q[j]:
                    state[j] = 0
            elif u[f, j] < p[j]:
                state[j] = 1
            out[f, j] = state[j]
    return out


# ---------------------------------------------------------------------------
# Topology


@dataclass(frozen=True)
class Topology:
    """Which events each device monitors (``monitored[k - 1]`` is M_k, ascending)."""

    monitored: tuple[tuple[int, ...], ...]
    num_events: int

    def __post_init__(self):
        mon = tuple(tuple(sorted(set(int(m) for m in ev))) for ev in self.monitored)
        if not mon:
            raise ValueError("topology needs at least one device")
        for k, ev in enumerate(mon, start=1):
            if not ev:
                raise ValueError(f"device {k} monitors no events")
            if ev[0] < 1 or ev[-1] > self.num_events:
                raise ValueError(f"device {k} monitors an event outside 1..{self.num_events}")
        object.__setattr__(self, "monitored", mon)
        # 0-based column indices into the event state, one array per device
        object.__setattr__(self, "_columns", tuple(np.array(ev) - 1 for ev in mon))

    @property
    def num_devices(self) -> int:
        return len(self.monitored)

    def monitors(self, device: int) -> tuple[int, ...]:
        self._check_device(device)
        return self.monitored[device - 1]

    def watchers(self, event: int) -> tuple[int, ...]:
        """K_m: the devices monitoring ``event``."""
        return tuple(k for k, ev in enumerate(self.monitored, start=1) if event in ev)

    def reverse_map(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.watchers(m) for m in range(1, self.num_events + 1))

    def columns(self, device: int) -> np.ndarray:
        return self._columns[device - 1]

    def _check_device(self, device: int):
        if not 1 <= device <= self.num_devices:
            raise ContractViolation(f"unknown device {device}")

    @classmethod
    def from_reverse_map(cls, watchers: Sequence[Sequence[int]], num_devices: int) -> "Topology":
        monitored = [[] for _ in range(num_devices)]
        for m, ks in enumerate(watchers, start=1):
            for k in ks:
                if not 1 <= k <= num_devices:
                    raise ValueError(f"event {m} lists unknown device {k}")
                monitored[k - 1].append(m)
        return cls(tuple(tuple(ev) for ev in monitored), len(watchers))


def observe(chains: EventChainSet, topology: Topology, device: int) -> np.ndarray:
    """Activity bits of the device's monitored events, in ascending event order."""
    topology._check_device(device)
    return chains.state[topology.columns(device)]


# ---------------------------------------------------------------------------
# Actions and frame outcome


class Transmit(NamedTuple):
    event: int
    slot: int


class _Idle:
    __slots__ = ()

    def __repr__(self):
        return "IDLE"

    def __reduce__(self):
        return "IDLE"


IDLE = _Idle()
DeviceAction = Union[_Idle, Transmit]


class Winner(NamedTuple):
    device: int
    event: int


EMPTY = "empty"
COLLISION = "collision"
SlotResult = Union[str, Winner]


class Feedback(IntEnum):
    IDLE_OR_NONE = 0
    SUCCESS = 1
    REDUNDANT = 2
    COLLISION = 3


@dataclass(frozen=True)
class FrameOutcome:
    slot_result: tuple[SlotResult, ...]
    delivered: tuple[bool, ...]
    feedback: tuple[Feedback, ...]

    @property
    def num_delivered(self) -> int:
        return sum(self.delivered)

    @property
    def collisions(self) -> int:
        return sum(1 for fb in self.feedback if fb is Feedback.COLLISION)


def resolve_frame(
    actions: Sequence[DeviceAction],
    chains: EventChainSet,
    topology: Topology,
    num_slots: int,
) -> FrameOutcome:
    if len(actions) != topology.num_devices:
        raise ContractViolation(
            f"expected {topology.num_devices} actions, got {len(actions)}"
        )
    state = chains.state
    occupants: list[list[tuple[int, int]]] = [[] for _ in range(num_slots)]
    for k, action in enumerate(actions, start=1):
        if action is IDLE:
            continue
        m, t = action
        if m not in topology.monitored[k - 1]:
            raise ContractViolation(f"device {k} does not monitor event {m}")
        if not state[m - 1]:
            raise ContractViolation(f"device {k} transmits inactive event {m}")
        if not 1 <= t <= num_slots:
            raise ContractViolation(f"device {k} uses slot {t} outside 1..{num_slots}")
        occupants[t - 1].append((k, m))

    feedback = [Feedback.IDLE_OR_NONE] * len(actions)
    delivered = [False] * chains.num_events
    slots: list[SlotResult] = []
    for occ in occupants:
        if not occ:
            slots.append(EMPTY)
        elif len(occ) == 1:
            k, m = occ[0]
            slots.append(Winner(k, m))
            # slots are scanned in order, so the earliest delivery is the informative one
            feedback[k - 1] = Feedback.REDUNDANT if delivered[m - 1] else Feedback.SUCCESS
            delivered[m - 1] = True
        else:
            slots.append(COLLISION)
            for k, _ in occ:
                feedback[k - 1] = Feedback.COLLISION
    return FrameOutcome(tuple(slots), tuple(delivered), tuple(feedback))


# ---------------------------------------------------------------------------
# Metrics and rewards


def frame_event_rate(
    outcome: FrameOutcome, chains: EventChainSet, num_slots: int
) -> Optional[float]:
    """Delivered active events over min(T, #active); ``None`` marks a vacuous frame."""
    n_active = int(chains.state.sum())
    if n_active == 0:
        return None
    hits = sum(1 for m, d in enumerate(outcome.delivered) if d and chains.state[m])
    return hits / min(num_slots, n_active)


def average_event_rate(rates: Sequence[Optional[float]]) -> float:
    kept = [r for r in rates if r is not None and not math.isnan(r)]
    if not kept:
        raise UndefinedMetricError("every frame is vacuous; the event rate is undefined")
    return sum(kept) / len(kept)


def discounted_return(rates: Sequence[Optional[float]], gamma: float) -> float:
    """Sum of gamma**f * R(f) with frames numbered from 1; vacuous frames add 0."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {gamma}")
    total = 0.0
    weight = 1.0
    for r in rates:
        weight *= gamma
        if r is not None and not math.isnan(r):
            total += weight * r
    return total


@dataclass(frozen=True)
class RewardParams:
    success: float = 10.0
    redundant: float = -5.0
    collision: float = -10.0

    def __post_init__(self):
        if not self.collision < self.redundant <= 0 < self.success:
            raise ValueError(
                "rewards must satisfy collision < redundant <= 0 < success, got "
                f"A={self.success}, B={self.redundant}, C={self.collision}"
            )

    def table(self) -> np.ndarray:
        # indexed by Feedback value
        return np.array([0.0, self.success, self.redundant, self.collision])


def rewards_from_outcome(outcome: FrameOutcome, params: RewardParams) -> np.ndarray:
    table = params.table()
    return table[np.fromiter((int(fb) for fb in outcome.feedback), dtype=np.intp)]
