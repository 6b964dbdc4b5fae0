"""Seeded training runs, mu sweeps and CSV output."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .agents.controllers import Controller, make_controller
from .config import ExperimentConfig
from .env import (
    EventChainSet,
    Feedback,
    RewardParams,
    Topology,
    UndefinedMetricError,
    average_event_rate,
    discounted_return,
    draw_stationary,
    frame_event_rate,
    resolve_frame,
    rewards_from_outcome,
    transition_events,
)

CSV_HEADER = ("mu", "algorithm", "run", "episode", "event_rate", "discounted_return")


def build_scenario(cfg: ExperimentConfig, mu: Optional[float] = None) -> tuple[Topology, EventChainSet]:
    """Topology for the configured scenario plus symmetric chains at ``mu``.

    All events start inactive; callers redraw the state before use.
    """
    mu = cfg.mu[0] if mu is None else mu
    K, M = cfg.num_devices, cfg.num_events
    if cfg.scenario == "none-correlation":
        topology = Topology(tuple((k,) for k in range(1, K + 1)), M)
    elif cfg.scenario == "full-correlation":
        topology = Topology(tuple(tuple(range(1, M + 1)) for _ in range(K)), M)
    else:
        topology = Topology(cfg.topology, M)
    return topology, EventChainSet.symmetric(M, mu)


@dataclass
class EpisodeStats:
    rate: float  # nan when every frame of the episode was vacuous
    discounted_return: float
    collisions: int
    frame_rates: list[Optional[float]] = field(repr=False, default_factory=list)


@dataclass
class RunResult:
    seed: int
    rates: list[float]
    returns: list[float]
    collisions: int = 0
    final_fraction: float = 0.1

    @property
    def final_window(self) -> list[float]:
        n = max(1, int(round(len(self.rates) * self.final_fraction)))
        return self.rates[-n:]

    @property
    def final_mean(self) -> float:
        """Mean of the per-episode rates over the last episodes, skipping vacuous ones."""
        kept = [r for r in self.final_window if not math.isnan(r)]
        return sum(kept) / len(kept) if kept else math.nan


def run_episode(
    topology: Topology,
    chains: EventChainSet,
    controller: Controller,
    frames: int,
    rng: np.random.Generator,
    num_slots: int,
    rewards: RewardParams = RewardParams(),
    gamma: float = 0.9,
    keep_frames: bool = False,
) -> tuple[EpisodeStats, EventChainSet]:
    """Play ``frames`` frames: observe, act, resolve, reward, learn, advance the events."""
    if frames < 1:
        raise ValueError("an episode needs at least one frame")
    rates: list[Optional[float]] = []
    collisions = 0
    for _ in range(frames):
        actions = controller.act(chains, rng)
        outcome = resolve_frame(actions, chains, topology, num_slots)
        rates.append(frame_event_rate(outcome, chains, num_slots))
        collisions += outcome.feedback.count(Feedback.COLLISION)
        r = rewards_from_outcome(outcome, rewards)
        nxt = transition_events(chains, rng)
        if controller.learns:
            controller.learn(r, nxt, rng)
        chains = nxt
    try:
        rate = average_event_rate(rates)
    except UndefinedMetricError:
        rate = math.nan
    stats = EpisodeStats(rate, discounted_return(rates, gamma), collisions, rates if keep_frames else [])
    return stats, chains


def controller_for(cfg: ExperimentConfig, algorithm: str, topology: Topology, rng) -> Controller:
    hyper = {}
    if algorithm == "idqn":
        hyper = dict(
            window=cfg.window,
            hidden=cfg.hidden,
            epsilon=cfg.epsilon,
            epsilon_min=cfg.epsilon_min,
            epsilon_decay=cfg.epsilon_decay,
            epsilon_schedule=cfg.epsilon_schedule,
            gamma=cfg.gamma,
            lr=cfg.lr_q,
        )
    elif algorithm == "madspg":
        hyper = dict(
            hidden=cfg.hidden,
            gamma=cfg.gamma,
            tau=cfg.tau,
            lr_actor=cfg.lr_actor,
            lr_critic=cfg.lr_critic,
            batch_size=cfg.batch_size,
            replay_capacity=cfg.replay_capacity,
            warmup=cfg.warmup,
        )
    return make_controller(algorithm, topology, cfg.num_slots, rng, **hyper)


def train_run(cfg: ExperimentConfig, algorithm: str, mu: float, run: int) -> RunResult:
    """One independent run with seed ``cfg.seed + run`` and fresh agents."""
    seed = cfg.seed + run
    rng = np.random.default_rng(seed)
    topology, chains = build_scenario(cfg, mu)
    controller = controller_for(cfg, algorithm, topology, rng)
    rewards = RewardParams(cfg.reward_success, cfg.reward_redundant, cfg.reward_collision)
    result = RunResult(seed, [], [], 0, cfg.final_fraction)
    for _ in range(cfg.episodes):
        chains = draw_stationary(chains, rng)
        stats, chains = run_episode(topology, chains, controller, cfg.frames, rng, cfg.num_slots, rewards, cfg.gamma)
        result.rates.append(stats.rate)
        result.returns.append(stats.discounted_return)
        result.collisions += stats.collisions
        controller.end_episode()
    return result


def _train_run_args(args):
    return train_run(*args)


def _map(fn, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def train(cfg: ExperimentConfig, algorithm: Optional[str] = None, mu: Optional[float] = None) -> list[RunResult]:
    algorithm = algorithm or cfg.algorithm[0]
    mu = cfg.mu[0] if mu is None else mu
    jobs = [(cfg, algorithm, mu, r) for r in range(cfg.runs)]
    return _map(_train_run_args, jobs, cfg.jobs)


@dataclass(frozen=True)
class CellSummary:
    mu: float
    algorithm: str
    mean: float
    stderr: float
    runs: int


def summarize(mu: float, algorithm: str, results: Sequence[RunResult]) -> CellSummary:
    finals = np.array([r.final_mean for r in results], dtype=float)
    finals = finals[~np.isnan(finals)]
    mean = float(finals.mean()) if finals.size else math.nan
    se = float(finals.std(ddof=1) / math.sqrt(finals.size)) if finals.size > 1 else 0.0
    return CellSummary(mu, algorithm, mean, se, len(results))


@dataclass
class SweepResult:
    cells: dict[tuple[float, str], list[RunResult]]

    def table(self) -> list[CellSummary]:
        return [summarize(mu, alg, self.cells[(mu, alg)]) for mu, alg in sorted(self.cells)]

    def rows(self) -> list[tuple]:
        out = []
        for mu, alg in sorted(self.cells):
            for run, res in enumerate(self.cells[(mu, alg)]):
                for ep, (rate, ret) in enumerate(zip(res.rates, res.returns)):
                    out.append((mu, alg, run, ep, rate, ret))
        return out


def sweep_mu(cfg: ExperimentConfig, mus: Optional[Iterable[float]] = None) -> SweepResult:
    """Train every (mu, algorithm) cell; runs within and across cells are independent."""
    mus = tuple(cfg.mu if mus is None else mus)
    if not mus:
        raise ValueError("mu list is empty")
    cells = [(mu, alg) for mu in mus for alg in cfg.algorithm]
    jobs = [(cfg, alg, mu, r) for mu, alg in cells for r in range(cfg.runs)]
    flat = _map(_train_run_args, jobs, cfg.jobs)
    out: dict[tuple[float, str], list[RunResult]] = {}
    for (_, alg, mu, _), res in zip(jobs, flat):
        out.setdefault((mu, alg), []).append(res)
    return SweepResult(out)


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(results: Optional[SweepResult], path) -> Path:
    """One row per (mu, algorithm, run, episode), in ascending order."""
    path = Path(path)
    rows = results.rows() if results is not None else []
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for mu, alg, run, ep, rate, ret in rows:
                writer.writerow((_fmt(mu), alg, run, ep, _fmt(rate), _fmt(ret)))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror}") from exc
    return path


def read_csv(path) -> list[tuple]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [(float(mu), alg, int(run), int(ep), float(rate), float(ret)) for mu, alg, run, ep, rate, ret in reader]
