"""Brute-force reference computations used to check the fast paths.

Nothing here imports the frame resolver or the network code: the event-rate
oracle works directly from the per-(device, event, slot) transmit indicators,
and gradients come from central finite differences.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit


def transmit_indicators(actions, num_devices: int, num_events: int, num_slots: int) -> np.ndarray:
    """x[k, m, t] = 1 when device k reports event m in slot t (all 0-based)."""
    x = np.zeros((num_devices, num_events, num_slots), dtype=int)
    for k, a in enumerate(actions):
        if a is not None and not _is_idle(a):
            m, t = a
            x[k, m - 1, t - 1] = 1
    return x


def _is_idle(a) -> bool:
    return not isinstance(a, tuple)


def slot_success(x: np.ndarray, monitored: Sequence[Sequence[int]], state: Sequence[int]) -> np.ndarray:
    """c[m, t]: event m is the only transmission heard in slot t."""
    K, M, T = x.shape
    watchers = [[k for k in range(K) if m + 1 in monitored[k]] for m in range(M)]
    active = [m for m in range(M) if state[m]]
    c = np.zeros((M, T), dtype=int)
    for m in range(M):
        for t in range(T):
            own = sum(x[k, m, t] for k in watchers[m])
            others = sum(x[k, m2, t] for m2 in active if m2 != m for k in watchers[m2])
            c[m, t] = int(own == 1 and others == 0)
    return c


def event_rate(x: np.ndarray, monitored, state, num_slots: int) -> Optional[Fraction]:
    """Delivered active events over min(T, #active), exactly; None when nothing is active."""
    active = [m for m in range(len(state)) if state[m]]
    if not active:
        return None
    c = slot_success(x, monitored, state)
    hits = sum(1 for m in active if c[m].sum() >= 1)
    return Fraction(hits, min(num_slots, len(active)))


def feedback_classes(x: np.ndarray, monitored, state) -> list[str]:
    """'success' / 'redundant' / 'collision' / 'idle' per device.

    A successful report is redundant when the same event was already heard
    in an earlier slot of the frame.
    """
    K, M, T = x.shape
    c = slot_success(x, monitored, state)
    per_slot = x.sum(axis=(0, 1))
    out = []
    for k in range(K):
        sent = np.argwhere(x[k])
        if len(sent) == 0:
            out.append("idle")
            continue
        m, t = sent[0]
        if per_slot[t] > 1:
            out.append("collision")
        elif c[m, :t].sum() >= 1:
            out.append("redundant")
        else:
            out.append("success")
    return out


def feasible_actions(events: Sequence[int], state, num_slots: int) -> list:
    """Idle (None) plus every (active monitored event, slot) pair."""
    acts: list = [None]
    for m in events:
        if state[m - 1]:
            acts += [(m, t) for t in range(1, num_slots + 1)]
    return acts


def all_topologies(num_devices: int, num_events: int):
    subsets = [s for r in range(1, num_events + 1) for s in itertools.combinations(range(1, num_events + 1), r)]
    return itertools.product(subsets, repeat=num_devices)


def _pattern_weight(state, activity: float) -> float:
    n = sum(state)
    return activity**n * (1 - activity) ** (len(state) - n)


def expected_rate(
    monitored: Sequence[Sequence[int]],
    num_events: int,
    num_slots: int,
    joint_actions: Callable[[tuple[int, ...]], list[tuple[float, list]]],
    activity: float = 0.5,
) -> float:
    """E[R(f) | frame not vacuous] under independent Bernoulli(activity) events.

    ``joint_actions(state)`` lists (probability, action profile) pairs.
    """
    num = 0.0
    den = 0.0
    K = len(monitored)
    for state in itertools.product((0, 1), repeat=num_events):
        if not any(state):
            continue
        w = _pattern_weight(state, activity)
        den += w
        for prob, profile in joint_actions(state):
            x = transmit_indicators(profile, K, num_events, num_slots)
            num += w * prob * float(event_rate(x, monitored, state, num_slots))
    return num / den


def aloha_profiles(monitored, num_slots: int):
    def profiles(state):
        per_device = []
        for events in monitored:
            active = [m for m in events if state[m - 1]]
            if not active:
                per_device.append([(1.0, None)])
            else:
                p = 1.0 / (len(active) * num_slots)
                per_device.append([(p, (m, t)) for m in active for t in range(1, num_slots + 1)])
        out = []
        for combo in itertools.product(*per_device):
            out.append((float(np.prod([c[0] for c in combo])), [c[1] for c in combo]))
        return out

    return profiles


def tdma_profiles(monitored, num_slots: int):
    K = len(monitored)

    def profiles(state):
        schedules = list(itertools.permutations(range(K), num_slots))
        out = []
        for sched in schedules:
            choices = []
            for k in range(K):
                if k not in sched:
                    choices.append([(1.0, None)])
                    continue
                slot = sched.index(k) + 1
                active = [m for m in monitored[k] if state[m - 1]]
                if not active:
                    choices.append([(1.0, None)])
                else:
                    choices.append([(1.0 / len(active), (m, slot)) for m in active])
            for combo in itertools.product(*choices):
                p = float(np.prod([c[0] for c in combo])) / len(schedules)
                out.append((p, [c[1] for c in combo]))
        return out

    return profiles


def central_difference(f: Callable[[np.ndarray], float], theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(theta)
    work = theta.copy()
    for i in range(theta.size):
        orig = work[i]
        work[i] = orig + step
        hi = f(work)
        work[i] = orig - step
        lo = f(work)
        work[i] = orig
        grad[i] = (hi - lo) / (2 * step)
    return grad


def gradient_check(params, x: np.ndarray, upstream: np.ndarray, step: float = 1e-5, floor: float = 1e-6) -> float:
    """Worst per-coordinate relative error of backprop against central differences.

    The loss is ``upstream . output``. Relative error is |a - b| / max(|a|, |b|, floor);
    the floor keeps coordinates whose true derivative is ~0 from dividing by roundoff.
    """
    from . import nn

    theta, sizes = nn.flatten(params)
    xb = np.atleast_2d(np.asarray(x, dtype=float))
    ub = np.atleast_2d(np.asarray(upstream, dtype=float))
    numeric = _central_difference_mlp(theta, sizes, xb, ub, step)
    analytic = nn.mlp_backward(params, x, upstream).flat()
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


@njit(cache=True)
def _mlp_value(theta, sizes, x, upstream):
    # plain loops, independent of the training kernels
    a = x
    n = sizes.shape[0] - 1
    off = 0
    for i in range(n):
        n_in, n_out = sizes[i], sizes[i + 1]
        z = np.empty((a.shape[0], n_out))
        for r in range(a.shape[0]):
            for o in range(n_out):
                acc = theta[off + n_in * n_out + o]
                for j in range(n_in):
                    acc += a[r, j] * theta[off + j * n_out + o]
                z[r, o] = max(acc, 0.0) if i < n - 1 else acc
        off += n_in * n_out + n_out
        a = z
    return np.sum(a * upstream)


@njit(cache=True)
def _central_difference_mlp(theta, sizes, x, upstream, step):
    grad = np.zeros_like(theta)
    work = theta.copy()
    for i in range(theta.size):
        orig = work[i]
        work[i] = orig + step
        hi = _mlp_value(work, sizes, x, upstream)
        work[i] = orig - step
        lo = _mlp_value(work, sizes, x, upstream)
        work[i] = orig
        grad[i] = (hi - lo) / (2 * step)
    return grad


def kink_margin(params, x: np.ndarray) -> float:
    """Smallest |pre-activation| over the ReLU units for input ``x``."""
    a = np.asarray(x, dtype=float)
    margin = np.inf
    for layer in params.layers[:-1]:
        z = a @ layer.weight + layer.bias
        margin = min(margin, float(np.min(np.abs(z))))
        a = np.maximum(z, 0.0)
    return margin


def smooth_input(params, rng: np.random.Generator, margin: float = 1e-3, tries: int = 1000) -> np.ndarray:
    """A standard-normal input whose ReLU pre-activations all stay ``margin`` away from 0.

    Finite differences straddling a kink measure a one-sided slope, not the
    derivative, so gradient checks draw their inputs here.
    """
    for _ in range(tries):
        x = rng.normal(size=params.input_size)
        if kink_margin(params, x) > margin:
            return x
    raise RuntimeError("no input found away from the ReLU kinks")
