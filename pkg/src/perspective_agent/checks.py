"""Programmatic verification checks mirrored by the acceptance test suite.

Each check returns a CheckResult so the reproduce command can print a
pass/fail table; the pytest acceptance module asserts on the same functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .agent import AgentConfig, PerspectiveAgent
from .analysis import AnalysisResult, quantile_trajectories
from .diffcore import StopCache, backward, finite_diff_check
from .env import RegimeSchedule, regime_at

GRADCHECK_TOL = 1e-4
DAMPING_TOL = 1e-10

TINY_AGENT = dict(z_dim=4, g_dim=4, encoder_hidden=6, decoder_hidden=6, policy_hidden=6)

PARAM_GROUPS = {
    "encoder": "enc.",
    "gru": "gru.",
    "decoder": "dec.",
    "policy": "pol.",
}


@dataclass
class CheckResult:
    ident: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.ident} {self.name}: {self.detail}"


def _tiny_agent(seed: int = 0) -> PerspectiveAgent:
    config = AgentConfig(**TINY_AGENT)
    return PerspectiveAgent(config, np.random.default_rng(seed))


def _random_step_inputs(agent: PerspectiveAgent, rng: np.random.Generator):
    c = agent.config
    obs = rng.normal(size=c.obs_dim)
    prev_action = np.zeros(c.action_count)
    prev_action[rng.integers(c.action_count)] = 1.0
    g_prev = rng.normal(size=c.g_dim) * 0.5
    next_obs = rng.normal(size=c.obs_dim)
    action = int(rng.integers(c.action_count))
    advantage = float(rng.normal())
    return obs, prev_action, g_prev, next_obs, action, advantage


def _build_losses(agent, inputs, stop_cache):
    obs, prev_action, g_prev, next_obs, action, advantage = inputs
    state = agent.forward(obs, prev_action, g_prev, stop_cache)
    state.action = action
    predictions = agent.decode_all(state.global_latent)
    return agent.compute_losses(
        state, predictions, next_obs, g_prev, advantage,
        cost=0.0, baseline=0.0, actor_enabled=True, stop_cache=stop_cache,
    )


def check_gradient_correctness(seed: int = 1) -> CheckResult:
    """Analytic gradients of every loss term match central finite differences.

    Stop-gradient boundaries are frozen at their base-pass values, which is
    the function the analytic gradient differentiates. The pinned instance is
    well-conditioned: its smallest nonzero gradient component sits far above
    the central-difference noise floor at h=1e-5 in 64-bit, so the relative
    comparison is meaningful at every component.
    """
    agent = _tiny_agent(seed)
    rng = np.random.default_rng(seed + 100)
    inputs = _random_step_inputs(agent, rng)
    worst = {}
    for term in ("pred", "smooth", "actor", "entropy", "total"):
        cache = StopCache()
        _build_losses(agent, inputs, cache)

        def f(store, _term=term, _cache=cache):
            _cache.rewind()
            return getattr(_build_losses(agent, inputs, _cache), _term)

        worst[term] = finite_diff_check(f, agent.store, h=1e-5)
    worst_term = max(worst, key=worst.get)
    passed = worst[worst_term] < GRADCHECK_TOL
    return CheckResult(
        "C1", "gradient correctness",
        passed,
        f"max rel err {worst[worst_term]:.3e} ({worst_term}) < {GRADCHECK_TOL:g}",
    )


def check_stop_gradient_separation(passes: int = 100, seed: int = 0) -> CheckResult:
    """Actor/entropy never touch world-model parameters and vice versa, exactly."""
    agent = _tiny_agent(seed)
    rng = np.random.default_rng(seed + 200)
    violations = 0
    for _ in range(passes):
        inputs = _random_step_inputs(agent, rng)
        bundle = _build_losses(agent, inputs, None)
        for loss, forbidden in (
            (bundle.actor, ("encoder", "gru", "decoder")),
            (bundle.entropy, ("encoder", "gru", "decoder")),
            (bundle.pred, ("policy",)),
        ):
            agent.store.zero_grads()
            backward(loss)
            for group in forbidden:
                for name in agent.parameter_group(PARAM_GROUPS[group]):
                    if np.any(agent.store[name].grad != 0.0):
                        violations += 1
        agent.store.zero_grads()
    return CheckResult(
        "C2", "stop-gradient separation",
        violations == 0,
        f"{passes} random passes, {violations} nonzero forbidden gradients",
    )


def check_damping_algebra(steps: int = 1000, seed: int = 0) -> CheckResult:
    """||g_t - g_prev|| equals d * ||h_t - g_prev||; with d = 0, g never moves."""
    agent = _tiny_agent(seed)
    rng = np.random.default_rng(seed + 300)
    d = agent.config.damping
    worst = 0.0
    frozen_moves = 0.0
    for _ in range(steps):
        fast = dc.constant(rng.normal(size=agent.config.z_dim))
        prev_action = np.zeros(agent.config.action_count)
        prev_action[rng.integers(agent.config.action_count)] = 1.0
        g_prev = rng.normal(size=agent.config.g_dim)
        candidate, g_new = agent.update_global(fast, prev_action, g_prev)
        lhs = np.linalg.norm(g_new.value - g_prev)
        rhs = d * np.linalg.norm(candidate.value - g_prev)
        worst = max(worst, abs(lhs - rhs))
        _, g_frozen = agent.update_global(fast, prev_action, g_prev, damping=0.0)
        frozen_moves = max(frozen_moves, float(np.max(np.abs(g_frozen.value - g_prev))))
    passed = worst < DAMPING_TOL and frozen_moves == 0.0
    return CheckResult(
        "C3", "damping algebra",
        passed,
        f"{steps} steps, max |deviation| {worst:.2e} < {DAMPING_TOL:g}, "
        f"d=0 max move {frozen_moves:g}",
    )


def check_zone_preference(
    occupancy: dict[str, dict[str, list[float]]]
) -> CheckResult:
    """Seed-median Z2 occupancy grows and dominates late in training."""
    early = {z: float(np.median(occupancy["early"][z])) for z in ("Z0", "Z1", "Z2")}
    late = {z: float(np.median(occupancy["late"][z])) for z in ("Z0", "Z1", "Z2")}
    grew = late["Z2"] > early["Z2"]
    largest = late["Z2"] == max(late.values()) and late["Z2"] > max(late["Z0"], late["Z1"])
    return CheckResult(
        "C4", "zone preference",
        grew and largest,
        f"median Z2 early {early['Z2']:.3f} -> late {late['Z2']:.3f}; "
        f"late medians Z0={late['Z0']:.3f} Z1={late['Z1']:.3f} Z2={late['Z2']:.3f}",
    )


def check_directional_hysteresis(result: AnalysisResult) -> CheckResult:
    """The projection rises after A->B, falls after B->A, with opposite deltas."""
    summary = result.summaries["g_score"]
    up = summary.trend["A->B"]
    down = summary.trend["B->A"]
    d_ab = summary.terminal_delta["A->B"]
    d_ba = summary.terminal_delta["B->A"]
    passed = up > 0.0 and down < 0.0 and d_ab * d_ba < 0.0
    return CheckResult(
        "C5", "directional hysteresis",
        passed,
        f"trends A->B {up:+.3f}, B->A {down:+.3f}; deltas {d_ab:+.3f}/{d_ba:+.3f}",
    )


def check_entropy_contrast(result: AnalysisResult) -> CheckResult:
    """Entropy's centered-shape asymmetry stays below the projection's."""
    g_asym = result.summaries["g_score"].asymmetry
    h_asym = result.summaries["entropy_z"].asymmetry
    return CheckResult(
        "C6", "entropy reactivity contrast",
        h_asym < g_asym,
        f"entropy asym {h_asym:.4f} vs g-score asym {g_asym:.4f}",
    )


def _percentile_sorted(values: list[float], q: float) -> float:
    ordered = sorted(values)
    pos = q / 100.0 * (len(ordered) - 1)
    lower = int(np.floor(pos))
    frac = pos - lower
    if lower + 1 >= len(ordered):
        return ordered[lower]
    return ordered[lower] + frac * (ordered[lower + 1] - ordered[lower])


def check_quantile_oracle(seed: int = 7) -> CheckResult:
    """Two-stage median/IQR equals a brute-force sort-based computation exactly."""
    rng = np.random.default_rng(seed)
    period = 8
    matrices = [rng.normal(size=(4, period)) for _ in range(3)]
    traj = quantile_trajectories(matrices, "A->B")
    exact = True
    for tau in range(period):
        stage1 = [_percentile_sorted(list(m[:, tau]), 50.0) for m in matrices]
        if traj.median[tau] != _percentile_sorted(stage1, 50.0):
            exact = False
        if traj.q25[tau] != _percentile_sorted(stage1, 25.0):
            exact = False
        if traj.q75[tau] != _percentile_sorted(stage1, 75.0):
            exact = False
    single = rng.normal(size=(1, period))
    collapsed = quantile_trajectories([single], "A->B")
    collapse_ok = (
        np.array_equal(collapsed.median, single[0])
        and np.array_equal(collapsed.q25, single[0])
        and np.array_equal(collapsed.q75, single[0])
    )
    return CheckResult(
        "C7", "quantile pipeline oracle",
        exact and collapse_ok,
        f"3x4x{period} exact match: {exact}; single-event collapse: {collapse_ok}",
    )


def scan_switch_counts(period: int) -> tuple[int, int, int, int]:
    """Brute-force regime_at scan: raw toggles, per-direction raw counts, and
    toggles followed by a complete period window."""
    schedule = RegimeSchedule(period=period)
    labels = [regime_at(t, schedule).label for t in range(schedule.total_steps)]
    toggles = [
        t for t in range(1, schedule.total_steps) if labels[t] != labels[t - 1]
    ]
    a_to_b = sum(1 for t in toggles if labels[t] == "B")
    b_to_a = len(toggles) - a_to_b
    full_window = sum(1 for t in toggles if t + period <= schedule.total_steps)
    return len(toggles), a_to_b, b_to_a, full_window


def check_schedule_arithmetic() -> CheckResult:
    """Switch-event counts for the three periods against a brute-force scan.

    P=40 has 14 toggles (7 per direction); the stated counts for P=20 and
    P=80 correspond to toggles with a complete alignment window (27 and 6).
    """
    raw40, ab40, ba40, _ = scan_switch_counts(40)
    _, _, _, full20 = scan_switch_counts(20)
    _, _, _, full80 = scan_switch_counts(80)
    sched40 = RegimeSchedule(period=40)
    listed = len(sched40.switch_events())
    passed = (
        raw40 == 14 and ab40 == 7 and ba40 == 7 and listed == 14
        and full20 == 27 and full80 == 6
    )
    return CheckResult(
        "C8", "schedule arithmetic",
        passed,
        f"P=40 toggles {raw40} ({ab40}/{ba40} per direction); "
        f"complete-window events P=20: {full20}, P=80: {full80}",
    )
