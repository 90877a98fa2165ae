"""Fully online training and regime-switch testing loops.

One optimizer update per environment step, an EMA-normalized advantage with
clipping, actor gating during warm-up, per-episode reinitialization of the
global latent, and CSV trajectory logs with a fixed schema. Each run owns
three seeded random streams (weight init, environment noise, action
sampling) derived from its run seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import diffcore as dc
from .agent import AgentConfig, PerspectiveAgent, prediction_cost, sample_action
from .env import REGIME_A, GridWorld, RegimeSchedule, regime_at
from .errors import ConfigError, NumericError, QueryError

STREAM_INIT = 0
STREAM_TRAIN_ENV = 1
STREAM_TRAIN_ACTION = 2
STREAM_TEST_ENV = 3
STREAM_TEST_ACTION = 4

CSV_SCHEMA_VERSION = "step-v1"
CHECKPOINT_FORMAT = "pagent-checkpoint-v1"


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass
class TrainConfig:
    episodes: int = 200
    steps_per_episode: int = 240
    lr: float = 3e-4
    warmup_actor_steps: int = 12_000
    clip_norm: float = 1.0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    baseline_decay: float = 0.99
    baseline_clip: float = 5.0
    baseline_eps: float = 1e-8
    baseline_scale_floor: float = 1.0
    learn_during_test: bool = True

    def __post_init__(self):
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise ConfigError("episodes and steps_per_episode must be positive")
        if self.warmup_actor_steps > self.total_steps:
            raise ConfigError(
                f"warmup_actor_steps {self.warmup_actor_steps} exceeds "
                f"total steps {self.total_steps}"
            )
        if any(int(s) < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")

    @property
    def total_steps(self) -> int:
        return self.episodes * self.steps_per_episode


@dataclass
class BaselineState:
    """Exponential moving mean/variance of the internal cost.

    `update` returns the pre-update mean as the baseline and the clipped,
    scale-normalized advantage; the first observed cost initializes the mean
    so the first advantage is exactly zero. The normalization denominator is
    floored: a bare EMA standard deviation amplifies microscopic cost noise
    once the cost settles, which randomizes the policy off its optimum, so
    the divisor only ever shrinks large signals (set scale_floor to 0 for
    the unfloored variant).
    """

    decay: float = 0.99
    clip: float = 5.0
    eps: float = 1e-8
    scale_floor: float = 1.0
    mean: float = 0.0
    var: float = 0.0
    initialized: bool = False

    def peek(self, cost: float) -> tuple[float, float]:
        if not self.initialized:
            return cost, 0.0
        scale = max(self.scale_floor, math.sqrt(self.var + self.eps))
        adv = (cost - self.mean) / scale
        return self.mean, float(np.clip(adv, -self.clip, self.clip))

    def update(self, cost: float) -> tuple[float, float]:
        if not self.initialized:
            self.mean = cost
            self.var = 0.0
            self.initialized = True
        baseline, adv = self.peek(cost)
        delta = cost - self.mean
        self.var = self.decay * self.var + (1.0 - self.decay) * delta * delta
        self.mean = self.decay * self.mean + (1.0 - self.decay) * cost
        return baseline, adv

    def state_dict(self) -> dict:
        return {
            "decay": self.decay,
            "clip": self.clip,
            "eps": self.eps,
            "scale_floor": self.scale_floor,
            "mean": self.mean,
            "var": self.var,
            "initialized": self.initialized,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "BaselineState":
        return cls(**state)


@dataclass
class StepRecord:
    t: int
    episode: int
    phase: str
    regime: str
    zone: int
    col: int
    row: int
    action: int
    l_pred: float
    l_smooth: float
    l_actor: float
    entropy: float
    l_total: float
    cost: float
    baseline: float
    g: np.ndarray


@dataclass
class TrajectoryLog:
    config_hash: str
    seed: int
    phase: str
    records: list[StepRecord] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def g_matrix(self) -> np.ndarray:
        return np.stack([r.g for r in self.records])

    def __len__(self) -> int:
        return len(self.records)


def csv_header(g_dim: int) -> list[str]:
    return [
        "t", "episode", "phase", "regime", "zone", "col", "row", "action",
        "L_pred", "L_smooth", "L_actor", "H", "L_total", "c", "b",
    ] + [f"g{i}" for i in range(g_dim)]


def write_log_csv(log: TrajectoryLog, path) -> None:
    g_dim = len(log.records[0].g) if log.records else 12
    lines = [",".join(csv_header(g_dim))]
    for r in log.records:
        cells = [
            str(r.t), str(r.episode), r.phase, r.regime, str(r.zone),
            str(r.col), str(r.row), str(r.action),
            repr(r.l_pred), repr(r.l_smooth), repr(r.l_actor),
            repr(r.entropy), repr(r.l_total), repr(r.cost), repr(r.baseline),
        ] + [repr(float(v)) for v in r.g]
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_log_csv(path, seed: int = -1, config_hash: str = "") -> TrajectoryLog:
    """Parse a trajectory CSV; malformed rows raise ConfigError with the row number."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigError(f"{path}: row 0: empty file")
    header = lines[0].split(",")
    fixed = csv_header(0)
    if header[: len(fixed)] != fixed or not all(
        h == f"g{i}" for i, h in enumerate(header[len(fixed):])
    ):
        raise ConfigError(f"{path}: row 1: unrecognized header")
    g_dim = len(header) - len(fixed)
    records = []
    phase = ""
    for row_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ConfigError(
                f"{path}: row {row_no}: expected {len(header)} cells, got {len(cells)}"
            )
        try:
            records.append(
                StepRecord(
                    t=int(cells[0]), episode=int(cells[1]), phase=cells[2],
                    regime=cells[3], zone=int(cells[4]), col=int(cells[5]),
                    row=int(cells[6]), action=int(cells[7]),
                    l_pred=float(cells[8]), l_smooth=float(cells[9]),
                    l_actor=float(cells[10]), entropy=float(cells[11]),
                    l_total=float(cells[12]), cost=float(cells[13]),
                    baseline=float(cells[14]),
                    g=np.array([float(v) for v in cells[15 : 15 + g_dim]]),
                )
            )
        except ValueError as err:
            raise ConfigError(f"{path}: row {row_no}: {err}") from err
        phase = records[-1].phase
    return TrajectoryLog(config_hash=config_hash, seed=seed, phase=phase, records=records)


# ---------------------------------------------------------------------------
# the online step shared by both loops
# ---------------------------------------------------------------------------

def _online_step(
    agent: PerspectiveAgent,
    env: GridWorld,
    baseline: BaselineState,
    action_rng: np.random.Generator,
    obs: np.ndarray,
    prev_action: np.ndarray,
    g_prev: np.ndarray,
    lr: float,
    clip_norm: float,
    actor_enabled: bool,
    learn: bool,
    step_label: str,
):
    state = agent.forward(obs, prev_action, g_prev)
    action = sample_action(state.probs.value, action_rng)
    state.action = action
    next_obs = env.step(action)
    predictions = agent.decode_all(state.global_latent)
    cost = prediction_cost(predictions[action].value, next_obs)
    if learn:
        b, adv = baseline.update(cost)
    else:
        b, adv = baseline.peek(cost)
    bundle = agent.compute_losses(
        state, predictions, next_obs, g_prev, adv, cost, b, actor_enabled
    )
    if not np.isfinite(bundle.total.value):
        raise NumericError(f"non-finite loss at {step_label}")
    if learn:
        dc.backward(bundle.total)
        dc.adam_step(agent.store, lr, clip_norm)
    return state, bundle, next_obs


def _record(t, episode, phase, regime_label, env, state, bundle) -> StepRecord:
    return StepRecord(
        t=t, episode=episode, phase=phase, regime=regime_label,
        zone=env.zone, col=env.position[0], row=env.position[1],
        action=state.action,
        l_pred=float(bundle.pred.value), l_smooth=float(bundle.smooth.value),
        l_actor=float(bundle.actor.value), entropy=float(bundle.entropy.value),
        l_total=float(bundle.total.value), cost=bundle.cost,
        baseline=bundle.baseline, g=state.global_latent.value.copy(),
    )


def train_run(
    agent_config: AgentConfig,
    train_config: TrainConfig,
    seed: int,
    config_hash: str = "",
) -> tuple[PerspectiveAgent, BaselineState, TrajectoryLog]:
    """Train one agent fully online; returns the agent, baseline, and step log.

    Episode boundaries reset the environment and reinitialize the global
    latent to zero; optimizer moments and the cost baseline persist.
    """
    agent = PerspectiveAgent(agent_config, stream_rng(seed, STREAM_INIT))
    env = GridWorld(sigma=REGIME_A.sigma, rng=stream_rng(seed, STREAM_TRAIN_ENV))
    action_rng = stream_rng(seed, STREAM_TRAIN_ACTION)
    baseline = BaselineState(
        decay=train_config.baseline_decay,
        clip=train_config.baseline_clip,
        eps=train_config.baseline_eps,
        scale_floor=train_config.baseline_scale_floor,
    )
    log = TrajectoryLog(config_hash=config_hash, seed=seed, phase="train")
    g_dim = agent_config.g_dim
    t = 0
    for episode in range(train_config.episodes):
        obs = env.reset()
        g_prev = np.zeros(g_dim)
        prev_action = np.zeros(agent_config.action_count)
        for _ in range(train_config.steps_per_episode):
            actor_enabled = t >= train_config.warmup_actor_steps
            state, bundle, obs = _online_step(
                agent, env, baseline, action_rng, obs, prev_action, g_prev,
                train_config.lr, train_config.clip_norm, actor_enabled,
                learn=True, step_label=f"train step {t} (seed {seed})",
            )
            log.records.append(_record(t, episode, "train", "A", env, state, bundle))
            g_prev = state.global_latent.value.copy()
            prev_action = np.zeros(agent_config.action_count)
            prev_action[state.action] = 1.0
            t += 1
    return agent, baseline, log


def test_run(
    agent: PerspectiveAgent,
    baseline: BaselineState,
    schedule: RegimeSchedule,
    seed: int,
    train_config: TrainConfig | None = None,
    learn: bool = True,
    config_hash: str = "",
) -> TrajectoryLog:
    """One continuous regime-switching episode over the whole schedule.

    Online updates stay active unless `learn` is False; the actor term is
    gated exactly as in training, using the optimizer step count carried in
    the agent's parameter store.
    """
    cfg = train_config or TrainConfig()
    env = GridWorld(
        sigma=regime_at(0, schedule).sigma, rng=stream_rng(seed, STREAM_TEST_ENV)
    )
    action_rng = stream_rng(seed, STREAM_TEST_ACTION)
    log = TrajectoryLog(config_hash=config_hash, seed=seed, phase="test")
    obs = env.reset()
    g_prev = np.zeros(agent.config.g_dim)
    prev_action = np.zeros(agent.config.action_count)
    for t in range(schedule.total_steps):
        regime = regime_at(t, schedule)
        env.set_sigma(regime.sigma)
        actor_enabled = learn and agent.store.step >= cfg.warmup_actor_steps
        state, bundle, obs = _online_step(
            agent, env, baseline, action_rng, obs, prev_action, g_prev,
            cfg.lr, cfg.clip_norm, actor_enabled,
            learn=learn, step_label=f"test step {t} (seed {seed})",
        )
        log.records.append(_record(t, 0, "test", regime.label, env, state, bundle))
        g_prev = state.global_latent.value.copy()
        prev_action = np.zeros(agent.config.action_count)
        prev_action[state.action] = 1.0
    return log


def occupancy_stats(log: TrajectoryLog, episode_range: tuple[int, int]) -> np.ndarray:
    """Fraction of steps spent in each zone over [start, stop) episodes."""
    lo, hi = episode_range
    zones = [r.zone for r in log.records if lo <= r.episode < hi]
    if not zones:
        raise QueryError(f"no records in episode range [{lo}, {hi})")
    counts = np.bincount(zones, minlength=3).astype(float)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, agent: PerspectiveAgent, baseline: BaselineState) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "agent_config": asdict(agent.config),
        "store": agent.store.state_dict(),
        "baseline": baseline.state_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_checkpoint(path) -> tuple[PerspectiveAgent, BaselineState]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    config = AgentConfig(**doc["agent_config"])
    agent = PerspectiveAgent(config, np.random.default_rng(0))
    agent.store.load_state_dict(doc["store"])
    baseline = BaselineState.from_state_dict(doc["baseline"])
    return agent, baseline
