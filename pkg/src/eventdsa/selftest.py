"""Quick oracle and invariant checks runnable from the command line.

Each check compares a fast path against an independent brute-force
computation and reports (name, passed, detail).
"""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from . import nn, oracles
from .agents import aloha_actions, tdma_actions
from .env import (
    IDLE,
    EventChainSet,
    Feedback,
    Topology,
    Transmit,
    evolve,
    frame_event_rate,
    resolve_frame,
)

Check = Callable[[], tuple[bool, str]]


def _chains(state, switch=0.5):
    state = np.asarray(state)
    return EventChainSet(np.full(len(state), switch), np.full(len(state), switch), state)


def check_frame_resolution() -> tuple[bool, str]:
    names = {Feedback.SUCCESS: "success", Feedback.REDUNDANT: "redundant", Feedback.COLLISION: "collision", Feedback.IDLE_OR_NONE: "idle"}
    cases = 0
    for K, M, T in itertools.product((1, 2, 3), (1, 2), (1, 2)):
        for monitored in oracles.all_topologies(K, M):
            topo = Topology(monitored, M)
            for state in itertools.product((0, 1), repeat=M):
                chains = _chains(state)
                per_device = [oracles.feasible_actions(ev, state, T) for ev in monitored]
                for profile in itertools.product(*per_device):
                    out = resolve_frame([IDLE if a is None else Transmit(*a) for a in profile], chains, topo, T)
                    x = oracles.transmit_indicators(profile, K, M, T)
                    want = oracles.event_rate(x, monitored, state, T)
                    got = frame_event_rate(out, chains, T)
                    if (got is None) != (want is None) or (got is not None and got != float(want)):
                        return False, f"rate mismatch for {monitored}, state {state}, actions {profile}"
                    if [names[f] for f in out.feedback] != oracles.feedback_classes(x, monitored, state):
                        return False, f"feedback mismatch for {monitored}, state {state}, actions {profile}"
                    cases += 1
    return True, f"{cases} frames match brute force"


def check_gradients(trials: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(trials):
        n_in, n_out = int(rng.integers(1, 12)), int(rng.integers(1, 6))
        net = nn.init_mlp([n_in, 64, 64, n_out], rng)
        x = oracles.smooth_input(net, rng)
        worst = max(worst, oracles.gradient_check(net, x, rng.normal(size=n_out)))
    return worst <= 1e-4, f"worst relative error {worst:.2e} over {trials} networks"


def check_chain_statistics(frames: int = 200_000) -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    mu = 0.6
    states = evolve(EventChainSet.symmetric(1, mu, np.array([1])), frames, rng)[:, 0].astype(float)
    activity = states.mean()
    xc = states - activity
    corr = float(np.dot(xc[:-1], xc[1:]) / np.dot(xc, xc))
    ok = abs(activity - 0.5) < 0.01 and abs(corr - mu) < 0.02
    return ok, f"activity {activity:.4f} (0.5), lag-1 correlation {corr:.4f} ({mu})"


def _baseline_mean(actions_fn, monitored, T, frames, rng):
    topo = Topology(monitored, max(max(ev) for ev in monitored))
    rates = []
    for _ in range(frames):
        chains = _chains((rng.random(topo.num_events) < 0.5).astype(int))
        r = frame_event_rate(resolve_frame(actions_fn(topo, chains, T, rng), chains, topo, T), chains, T)
        if r is not None:
            rates.append(r)
    rates = np.array(rates)
    return rates.mean(), rates.std(ddof=1) / np.sqrt(rates.size)


def check_baselines(frames: int = 40_000) -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    details = []
    ok = True
    for label, monitored in (("one event per device", ((1,), (2,), (3,), (4,))), ("all devices see all events", ((1, 2, 3, 4),) * 4)):
        for name, fn, profiles in (("tdma", tdma_actions, oracles.tdma_profiles), ("aloha", aloha_actions, oracles.aloha_profiles)):
            exact = oracles.expected_rate(monitored, 4, 2, profiles(monitored, 2))
            mean, se = _baseline_mean(fn, monitored, 2, frames, rng)
            ok &= abs(mean - exact) <= 4 * se
            details.append(f"{name}/{label}: {mean:.4f} vs exact {exact:.4f}")
    return ok, "; ".join(details)


CHECKS: dict[str, Check] = {
    "frame resolution vs brute force": check_frame_resolution,
    "backprop vs finite differences": check_gradients,
    "event chain statistics": check_chain_statistics,
    "baseline rates vs exact expectation": check_baselines,
}


def run_all(report=print) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        ok, detail = check()
        all_ok &= ok
        report(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
