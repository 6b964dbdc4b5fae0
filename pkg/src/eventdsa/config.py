"""Experiment configuration: defaults, ``key = value`` files, and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

ALGORITHMS = ("idqn", "madspg", "tdma", "aloha")
SCENARIOS = ("none-correlation", "full-correlation", "explicit")
EPSILON_SCHEDULES = ("decay", "square")

# conventional single-letter names, accepted in files and on the command line
ALIASES = {"K": "num_devices", "M": "num_events", "T": "num_slots", "F": "frames", "A": "reward_success", "B": "reward_redundant", "C": "reward_collision"}


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    num_devices: int = 4
    # defaults to one event per device
    num_events: Optional[int] = None
    num_slots: int = 2
    frames: int = 100
    episodes: int = 2000
    runs: int = 50
    scenario: str = "none-correlation"
    # explicit scenario only: M_k per device, and optionally K_m per event as a cross-check
    topology: Optional[tuple[tuple[int, ...], ...]] = None
    watchers: Optional[tuple[tuple[int, ...], ...]] = None
    mu: tuple[float, ...] = (0.9,)
    algorithm: tuple[str, ...] = ("idqn",)
    reward_success: float = 10.0
    reward_redundant: float = -5.0
    reward_collision: float = -10.0
    gamma: float = 0.9
    epsilon: float = 0.9
    epsilon_min: float = 0.05
    epsilon_decay: float = 0.995
    epsilon_schedule: str = "decay"
    window: int = 4
    batch_size: int = 32
    tau: float = 0.99
    # 1e-3 lets the bootstrapped single-sample updates diverge within a few episodes
    lr_q: float = 1e-4
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    replay_capacity: int = 10_000
    warmup: int = 500
    hidden: tuple[int, ...] = (64, 64)
    final_fraction: float = 0.1
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.num_events is None:
            object.__setattr__(self, "num_events", self.num_devices)
        validate(self)

    def switching_probability(self, mu: float) -> float:
        return (1.0 - mu) / 2.0

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _fail(name: str, message: str):
    raise ConfigError(f"{name}: {message}")


def validate(cfg: ExperimentConfig) -> None:
    for name in ("num_devices", "num_events", "num_slots", "frames", "episodes", "runs", "window", "batch_size", "replay_capacity", "jobs"):
        if getattr(cfg, name) < 1:
            _fail(name, f"must be >= 1, got {getattr(cfg, name)}")
    if cfg.warmup < 0:
        _fail("warmup", "must be >= 0")
    if cfg.seed < 0:
        _fail("seed", "must be a non-negative integer")
    if cfg.scenario not in SCENARIOS:
        _fail("scenario", f"must be one of {', '.join(SCENARIOS)}, got {cfg.scenario!r}")
    if not cfg.mu:
        _fail("mu", "needs at least one value")
    for mu in cfg.mu:
        # p = q = (1 - mu)/2 must stay within [0, 1/2]
        if not 0.0 <= mu <= 1.0:
            _fail("mu", f"{mu} gives p = q = {(1 - mu) / 2} outside [0, 1/2]")
    if not cfg.algorithm:
        _fail("algorithm", "needs at least one algorithm")
    for alg in cfg.algorithm:
        if alg not in ALGORITHMS:
            _fail("algorithm", f"unknown algorithm {alg!r}; choose from {', '.join(ALGORITHMS)}")
    if "tdma" in cfg.algorithm and cfg.num_slots > cfg.num_devices:
        _fail("num_slots", f"TDMA needs T <= K, got T={cfg.num_slots}, K={cfg.num_devices}")
    if not cfg.reward_collision < cfg.reward_redundant <= 0 < cfg.reward_success:
        _fail("reward_redundant", "rewards must satisfy C < B <= 0 < A")
    if not 0.0 < cfg.gamma < 1.0:
        _fail("gamma", f"must lie in (0, 1), got {cfg.gamma}")
    if not 0.0 <= cfg.epsilon_min <= cfg.epsilon <= 1.0:
        _fail("epsilon", f"need 0 <= epsilon_min <= epsilon <= 1, got {cfg.epsilon_min}, {cfg.epsilon}")
    if not 0.0 < cfg.epsilon_decay < 1.0:
        _fail("epsilon_decay", f"must lie in (0, 1), got {cfg.epsilon_decay}")
    if cfg.epsilon_schedule not in EPSILON_SCHEDULES:
        _fail("epsilon_schedule", f"must be one of {', '.join(EPSILON_SCHEDULES)}")
    if not 0.0 <= cfg.tau <= 1.0:
        _fail("tau", f"must lie in [0, 1], got {cfg.tau}")
    for name in ("lr_q", "lr_critic", "lr_actor"):
        if getattr(cfg, name) <= 0:
            _fail(name, "must be positive")
    if cfg.replay_capacity < cfg.batch_size:
        _fail("replay_capacity", "must hold at least one minibatch")
    if not cfg.hidden or min(cfg.hidden) < 1:
        _fail("hidden", "needs at least one positive layer width")
    if not 0.0 < cfg.final_fraction <= 1.0:
        _fail("final_fraction", "must lie in (0, 1]")
    if cfg.scenario == "none-correlation" and cfg.num_events != cfg.num_devices:
        _fail("num_events", f"none-correlation needs one event per device (M = K = {cfg.num_devices})")
    if cfg.scenario == "explicit":
        _validate_explicit(cfg)


def _validate_explicit(cfg: ExperimentConfig):
    if cfg.topology is None:
        _fail("topology", "explicit scenario needs a topology")
    if len(cfg.topology) != cfg.num_devices:
        _fail("topology", f"lists {len(cfg.topology)} devices, expected K = {cfg.num_devices}")
    for k, events in enumerate(cfg.topology, start=1):
        if not events:
            _fail("topology", f"device {k} monitors no events")
        for m in events:
            if not 1 <= m <= cfg.num_events:
                _fail("topology", f"device {k} monitors event {m} outside 1..{cfg.num_events}")
    if cfg.watchers is not None:
        if len(cfg.watchers) != cfg.num_events:
            _fail("watchers", f"lists {len(cfg.watchers)} events, expected M = {cfg.num_events}")
        for m in range(1, cfg.num_events + 1):
            from_topology = {k for k, ev in enumerate(cfg.topology, start=1) if m in ev}
            if set(cfg.watchers[m - 1]) != from_topology:
                _fail("watchers", f"event {m} watchers {sorted(cfg.watchers[m - 1])} do not transpose topology {sorted(from_topology)}")


# ---------------------------------------------------------------------------
# text parsing


def _parse_sets(text: str) -> tuple[tuple[int, ...], ...]:
    # "1,2; 2,3; 4" -> ((1, 2), (2, 3), (4,)); an empty group stays empty for validation
    groups = []
    for part in text.split(";"):
        part = part.strip()
        groups.append(tuple(int(v) for v in part.split(",") if v.strip()) if part else ())
    return tuple(groups)


def _list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def convert(name: str, raw: Any) -> Any:
    """Turn a string (or already-typed value) into the field's type."""
    if not isinstance(raw, str):
        return raw
    try:
        if name in ("topology", "watchers"):
            return _parse_sets(raw)
        if name == "mu":
            return tuple(float(v) for v in _list(raw))
        if name == "algorithm":
            return tuple(v.lower() for v in _list(raw))
        if name == "hidden":
            return tuple(int(v) for v in _list(raw))
        default = FIELDS[name].default
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int) or name == "num_events":
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} ({exc})") from None


def canonical_key(key: str) -> str:
    key = key.strip()
    if key in ALIASES:
        return ALIASES[key]
    name = key.lower().replace("-", "_")
    if name not in FIELDS:
        raise ConfigError(f"{key}: unknown configuration key")
    return name


def read_config_file(path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        name = canonical_key(key)
        values[name] = convert(name, raw.strip())
    return values


def parse_config(overrides: Optional[Mapping[str, Any]] = None, path=None) -> ExperimentConfig:
    """File values first, then ``overrides`` (e.g. command-line flags) on top."""
    values: dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        name = canonical_key(key)
        values[name] = convert(name, raw)
    return ExperimentConfig(**values)
