"""Learning-free access protocols."""

from __future__ import annotations

import numpy as np

from ..env import IDLE, DeviceAction, EventChainSet, Topology, Transmit


def _random_active(topology: Topology, chains: EventChainSet, device: int, rng) -> DeviceAction | None:
    cols = topology.columns(device)
    active = cols[chains.state[cols] == 1]
    if active.size == 0:
        return None
    return int(active[rng.integers(active.size)]) + 1


def tdma_actions(topology: Topology, chains: EventChainSet, num_slots: int, rng) -> list[DeviceAction]:
    """Schedule ``num_slots`` distinct random devices; the i-th one owns slot i."""
    K = topology.num_devices
    if num_slots > K:
        raise ValueError(f"TDMA needs T <= K, got T={num_slots}, K={K}")
    actions: list[DeviceAction] = [IDLE] * K
    for slot, k0 in enumerate(rng.choice(K, size=num_slots, replace=False), start=1):
        event = _random_active(topology, chains, int(k0) + 1, rng)
        if event is not None:
            actions[k0] = Transmit(event, slot)
    return actions


def aloha_actions(topology: Topology, chains: EventChainSet, num_slots: int, rng) -> list[DeviceAction]:
    """Every device with something to report picks a random active event and slot."""
    actions: list[DeviceAction] = []
    for k in range(1, topology.num_devices + 1):
        event = _random_active(topology, chains, k, rng)
        if event is None:
            actions.append(IDLE)
        else:
            actions.append(Transmit(event, int(rng.integers(num_slots)) + 1))
    return actions
