import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventdsa import oracles
from eventdsa.env import (
    COLLISION,
    EMPTY,
    IDLE,
    ContractViolation,
    EventChainSet,
    Feedback,
    RewardParams,
    Topology,
    Transmit,
    UndefinedMetricError,
    Winner,
    average_event_rate,
    discounted_return,
    evolve,
    frame_event_rate,
    observe,
    resolve_frame,
    rewards_from_outcome,
    transition_events,
)


def chains_with(state, p=0.5, q=0.5):
    state = np.asarray(state)
    return EventChainSet(np.full(len(state), p), np.full(len(state), q), state)


# ---------------------------------------------------------------- event chains


def test_zero_switching_is_absorbing():
    rng = np.random.default_rng(0)
    for start in ([0, 1, 0, 1], [1, 1, 1, 1], [0, 0, 0, 0]):
        c = chains_with(start, 0.0, 0.0)
        for _ in range(200):
            c = transition_events(c, rng)
        assert c.state.tolist() == start


def test_full_switching_alternates():
    c = chains_with([0, 1, 0, 1], 1.0, 1.0)
    rng = np.random.default_rng(1)
    c = transition_events(c, rng)
    assert c.state.tolist() == [1, 0, 1, 0]
    c = transition_events(c, rng)
    assert c.state.tolist() == [0, 1, 0, 1]


def test_transition_reads_only_own_chain():
    # event 1 frozen, event 2 forced to flip: neither influences the other
    c = EventChainSet(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([1, 0]))
    c = transition_events(c, np.random.default_rng(2))
    assert c.state.tolist() == [1, 1]


def test_evolve_matches_repeated_transitions():
    c = EventChainSet(np.array([0.1, 0.4, 0.9]), np.array([0.3, 0.05, 0.5]), np.array([1, 0, 1]))
    traj = evolve(c, 300, np.random.default_rng(7))
    rng = np.random.default_rng(7)
    for row in traj:
        c = transition_events(c, rng)
        assert np.array_equal(c.state, row)


def test_long_run_activity_and_autocorrelation():
    # asymmetric chain: activity p/(p+q) = 0.2, lag-1 correlation 1-p-q = 0.75
    c = EventChainSet(np.array([0.05]), np.array([0.2]), np.array([0]))
    x = evolve(c, 10**6, np.random.default_rng(3))[:, 0].astype(float)
    assert abs(x.mean() - 0.2) < 0.01
    xc = x - x.mean()
    assert abs(np.dot(xc[:-1], xc[1:]) / np.dot(xc, xc) - 0.75) < 0.02


@pytest.mark.parametrize("bad", [dict(p=[1.2]), dict(q=[-0.1]), dict(state=[2])])
def test_chain_validation(bad):
    args = dict(p=[0.5], q=[0.5], state=[0])
    args.update(bad)
    with pytest.raises(ValueError):
        EventChainSet(np.array(args["p"]), np.array(args["q"]), np.array(args["state"]))


# ---------------------------------------------------------------- topology / observe


def test_topology_maps_are_transposes():
    topo = Topology(((1, 2), (2,), (3, 1)), 3)
    assert topo.reverse_map() == ((1, 3), (1, 2), (3,))
    assert Topology.from_reverse_map(topo.reverse_map(), 3) == topo
    for k in range(1, 4):
        for m in range(1, 4):
            assert (k in topo.watchers(m)) == (m in topo.monitors(k))


def test_empty_monitoring_set_rejected():
    with pytest.raises(ValueError):
        Topology(((1,), ()), 2)


def test_observe_projects_monitored_events():
    c = chains_with([1, 0, 1, 1])
    topo = Topology(((2, 3), (1, 2, 3, 4), (4,)), 4)
    assert observe(c, topo, 1).tolist() == [0, 1]
    assert observe(c, topo, 2).tolist() == [1, 0, 1, 1]


def test_observe_inactive_single_event_leaves_only_idle():
    from eventdsa.agents import ActionIndexing

    c = chains_with([1, 1, 1, 0])
    topo = Topology(((4,),), 4)
    obs = observe(c, topo, 1)
    assert obs.tolist() == [0]
    mask = ActionIndexing(topo.monitors(1), 2).mask(obs)
    assert mask.tolist() == [1, 0, 0]


def test_observe_unknown_device():
    with pytest.raises(ContractViolation):
        observe(chains_with([1]), Topology(((1,),), 1), 2)


# ---------------------------------------------------------------- resolve_frame


def test_all_idle_frame():
    topo = Topology(((1,), (2,)), 2)
    out = resolve_frame([IDLE, IDLE], chains_with([1, 1]), topo, 2)
    assert out.slot_result == (EMPTY, EMPTY)
    assert out.delivered == (False, False)
    assert out.feedback == (Feedback.IDLE_OR_NONE,) * 2


def test_forced_collision():
    topo = Topology(((1,), (1,)), 1)
    out = resolve_frame([Transmit(1, 1), Transmit(1, 1)], chains_with([1]), topo, 2)
    assert out.slot_result == (COLLISION, EMPTY)
    assert out.delivered == (False,)
    assert out.feedback == (Feedback.COLLISION, Feedback.COLLISION)


def test_redundant_report_counted_once():
    topo = Topology(((1,), (1,)), 1)
    c = chains_with([1])
    out = resolve_frame([Transmit(1, 1), Transmit(1, 2)], c, topo, 2)
    assert out.slot_result == (Winner(1, 1), Winner(2, 1))
    assert out.delivered == (True,)
    assert out.feedback == (Feedback.SUCCESS, Feedback.REDUNDANT)
    assert frame_event_rate(out, c, 2) == 1.0


def test_earliest_slot_wins_redundancy():
    topo = Topology(((1,), (1,)), 1)
    out = resolve_frame([Transmit(1, 2), Transmit(1, 1)], chains_with([1]), topo, 2)
    assert out.feedback == (Feedback.REDUNDANT, Feedback.SUCCESS)


def test_three_devices_two_slots():
    topo = Topology(((1,), (2,), (2,)), 2)
    c = chains_with([1, 1])
    out = resolve_frame([Transmit(1, 1), Transmit(2, 1), Transmit(2, 2)], c, topo, 2)
    assert out.slot_result == (COLLISION, Winner(3, 2))
    assert out.delivered == (False, True)
    assert out.feedback == (Feedback.COLLISION, Feedback.COLLISION, Feedback.SUCCESS)
    assert frame_event_rate(out, c, 2) == 0.5


def test_inactive_or_unmonitored_event_is_a_contract_violation():
    topo = Topology(((1,), (2,)), 2)
    with pytest.raises(ContractViolation):
        resolve_frame([Transmit(2, 1), IDLE], chains_with([1, 1]), topo, 2)
    with pytest.raises(ContractViolation):
        resolve_frame([Transmit(1, 1), IDLE], chains_with([0, 1]), topo, 2)
    with pytest.raises(ContractViolation):
        resolve_frame([Transmit(1, 3), IDLE], chains_with([1, 1]), topo, 2)


def _exhaustive_cases(max_k=3, max_m=2, max_t=2):
    for K, M, T in itertools.product(range(1, max_k + 1), range(1, max_m + 1), range(1, max_t + 1)):
        for monitored in oracles.all_topologies(K, M):
            topo = Topology(monitored, M)
            for state in itertools.product((0, 1), repeat=M):
                per_device = [oracles.feasible_actions(ev, state, T) for ev in monitored]
                for profile in itertools.product(*per_device):
                    yield topo, state, T, profile


def test_resolve_frame_matches_brute_force_exhaustively():
    names = {
        Feedback.SUCCESS: "success",
        Feedback.REDUNDANT: "redundant",
        Feedback.COLLISION: "collision",
        Feedback.IDLE_OR_NONE: "idle",
    }
    cases = 0
    for topo, state, T, profile in _exhaustive_cases():
        chains = chains_with(state)
        actions = [IDLE if a is None else Transmit(*a) for a in profile]
        out = resolve_frame(actions, chains, topo, T)
        x = oracles.transmit_indicators(profile, topo.num_devices, topo.num_events, T)
        c = oracles.slot_success(x, topo.monitored, state)
        expect_rate = oracles.event_rate(x, topo.monitored, state, T)
        rate = frame_event_rate(out, chains, T)
        assert (rate is None) == (expect_rate is None)
        if rate is not None:
            assert rate == float(expect_rate)
        assert list(out.delivered) == [bool(c[m].sum() >= 1) for m in range(topo.num_events)]
        assert [names[f] for f in out.feedback] == oracles.feedback_classes(x, topo.monitored, state)
        per_slot = x.sum(axis=(0, 1))
        for t, res in enumerate(out.slot_result):
            if isinstance(res, Winner):
                assert per_slot[t] == 1 and x[res.device - 1, res.event - 1, t] == 1
            else:
                assert res == (EMPTY if per_slot[t] == 0 else COLLISION)
        cases += 1
    assert cases > 3000


@st.composite
def frames(draw):
    K = draw(st.integers(1, 5))
    M = draw(st.integers(1, 4))
    T = draw(st.integers(1, 4))
    monitored = [draw(st.sets(st.integers(1, M), min_size=1)) for _ in range(K)]
    state = draw(st.lists(st.integers(0, 1), min_size=M, max_size=M))
    profile = [draw(st.sampled_from(oracles.feasible_actions(sorted(ev), state, T))) for ev in monitored]
    return Topology(tuple(tuple(sorted(ev)) for ev in monitored), M), state, T, profile


@settings(max_examples=300, deadline=None)
@given(frames())
def test_frame_invariants(case):
    topo, state, T, profile = case
    chains = chains_with(state)
    out = resolve_frame([IDLE if a is None else Transmit(*a) for a in profile], chains, topo, T)
    rate = frame_event_rate(out, chains, T)
    n_active = sum(state)
    if n_active == 0:
        assert rate is None
        return
    assert 0.0 <= rate <= 1.0
    # each delivered event counts once, however many devices reported it
    assert rate == sum(out.delivered) / min(T, n_active)
    if sum(out.delivered) >= min(T, n_active):
        assert rate == 1.0
    senders = {}
    for k, a in enumerate(profile, start=1):
        if a is not None:
            senders.setdefault(a[1], []).append(k)
    for k, fb in enumerate(out.feedback, start=1):
        a = profile[k - 1]
        assert (fb is Feedback.COLLISION) == (a is not None and out.slot_result[a[1] - 1] == COLLISION)
    for t, res in enumerate(out.slot_result, start=1):
        assert (res == EMPTY) == (t not in senders)
        assert isinstance(res, Winner) == (len(senders.get(t, [])) == 1)


# ---------------------------------------------------------------- metrics


def _outcome_with(delivered, n_devices=1):
    from eventdsa.env import FrameOutcome

    return FrameOutcome((EMPTY,), tuple(delivered), (Feedback.IDLE_OR_NONE,) * n_devices)


@pytest.mark.parametrize(
    "state, delivered, T, expected",
    [
        ([1, 1], [True, True], 2, 1.0),
        ([1, 1, 1], [True, False, False], 2, 0.5),
        ([0, 1], [False, False], 2, 0.0),
        ([0, 0], [False, False], 2, None),
    ],
)
def test_frame_event_rate(state, delivered, T, expected):
    assert frame_event_rate(_outcome_with(delivered), chains_with(state), T) == expected


def test_average_event_rate():
    assert average_event_rate([1.0, 0.0, 1.0]) == pytest.approx(2 / 3)
    assert average_event_rate([1.0, None, 1.0]) == 1.0
    assert average_event_rate([0.5]) == 0.5
    with pytest.raises(UndefinedMetricError):
        average_event_rate([None, None])


def test_discounted_return():
    assert discounted_return([1, 1], 0.9) == pytest.approx(1.71)
    assert discounted_return([0, 0, 0], 0.9) == 0
    assert discounted_return([0.5, 1.0, 0.0], 0.5) == pytest.approx(0.5)
    assert discounted_return([None, 1.0], 0.5) == pytest.approx(0.25)
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            discounted_return([1.0], bad)


def test_rewards_from_outcome():
    from eventdsa.env import FrameOutcome

    params = RewardParams(10, -5, -10)
    fb = (Feedback.SUCCESS, Feedback.REDUNDANT, Feedback.COLLISION, Feedback.IDLE_OR_NONE)
    out = FrameOutcome((EMPTY,), (False,), fb)
    assert rewards_from_outcome(out, params).tolist() == [10, -5, -10, 0]
    idle = FrameOutcome((EMPTY,), (False,), (Feedback.IDLE_OR_NONE,) * 3)
    assert rewards_from_outcome(idle, params).tolist() == [0, 0, 0]
    two = FrameOutcome((EMPTY,), (False,), (Feedback.SUCCESS, Feedback.SUCCESS))
    assert rewards_from_outcome(two, params).tolist() == [10, 10]


@pytest.mark.parametrize("a, b, c", [(10, 1, -10), (10, -5, -5), (0, -5, -10), (10, -20, -10)])
def test_reward_ordering_enforced(a, b, c):
    with pytest.raises(ValueError):
        RewardParams(a, b, c)
