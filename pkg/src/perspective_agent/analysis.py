"""Switch-aligned hysteresis measurements over test-phase logs.

Builds the regime-difference projection axis for the global latent, z-scores
policy entropy within each run, aligns both signals on regime switches by
direction, aggregates with a two-stage quantile procedure (median across
events within a run, then median and interquartile band across seeds), and
summarizes directional asymmetry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kendalltau

from .env import RegimeSchedule
from .errors import AnalysisError
from .trainer import TrajectoryLog

DIRECTIONS = ("A->B", "B->A")
SIGNALS = ("g_score", "entropy_z")


@dataclass
class ReferenceDirection:
    """Unit axis from the regime-A mean latent to the regime-B mean latent."""

    unit: np.ndarray
    mean_a: np.ndarray
    mean_b: np.ndarray


def reference_direction(
    logs: list[TrajectoryLog],
    schedule: RegimeSchedule | None = None,
    exclude_first_k_after_switch: int = 0,
) -> ReferenceDirection:
    """Pooled estimate over the switching phase of all given runs.

    When a schedule is given, the stabilization warm-up is excluded: the
    latent starts each run from zero, and its initial growth transient would
    otherwise dominate the regime contrast. Within the switching phase
    nothing is excluded by default; `exclude_first_k_after_switch` optionally
    drops the first k steps after each switch from the estimate.
    """
    vectors: list[np.ndarray] = []
    labels: list[str] = []
    for log in sorted(logs, key=lambda entry: entry.seed):
        keep = np.ones(len(log), dtype=bool)
        if schedule is not None:
            keep[: schedule.warmup_steps] = False
        if exclude_first_k_after_switch > 0:
            if schedule is None:
                raise AnalysisError("schedule required to exclude post-switch steps")
            for t0 in schedule.switch_times:
                keep[t0 : t0 + exclude_first_k_after_switch] = False
        g = log.g_matrix()
        regime = log.column("regime")
        vectors.append(g[keep])
        labels.extend(regime[keep])
    stacked = np.concatenate(vectors)
    labels_arr = np.array(labels)
    if not np.any(labels_arr == "A") or not np.any(labels_arr == "B"):
        raise AnalysisError("both regimes must appear in the test logs")
    mean_a = stacked[labels_arr == "A"].mean(axis=0)
    mean_b = stacked[labels_arr == "B"].mean(axis=0)
    diff = mean_b - mean_a
    norm = float(np.linalg.norm(diff))
    if norm < 1e-15:
        raise AnalysisError("degenerate direction: regime means coincide")
    return ReferenceDirection(unit=diff / norm, mean_a=mean_a, mean_b=mean_b)


def g_score(g: np.ndarray, unit: np.ndarray) -> float:
    return float(np.dot(g, unit))


def g_score_series(g_matrix: np.ndarray, unit: np.ndarray) -> np.ndarray:
    return g_matrix @ unit


def entropy_z(series: np.ndarray, stats_start: int = 0) -> np.ndarray:
    """Z-score a per-run series with its population standard deviation.

    `stats_start` sets where the normalization window begins; the pipeline
    uses the switching phase, matching the projection-axis estimate.
    """
    series = np.asarray(series, dtype=float)
    window = series[stats_start:]
    if window.size < 2:
        raise AnalysisError("entropy series must have at least 2 points")
    mu = window.mean()
    sigma = window.std()
    if sigma <= 1e-12 * max(1.0, abs(mu)):
        raise AnalysisError("entropy series has zero variance")
    return (series - mu) / sigma


def align_switches(
    series: np.ndarray, schedule: RegimeSchedule, direction: str
) -> tuple[np.ndarray, int]:
    """Stack per-event windows series[t0 : t0+P] for switches of one direction.

    Events whose window would run past the end of the series are dropped;
    the dropped count is returned alongside the event matrix.
    """
    if direction not in DIRECTIONS:
        raise AnalysisError(f"unknown direction {direction!r}")
    series = np.asarray(series, dtype=float)
    period = schedule.period
    rows = []
    dropped = 0
    events = [t0 for t0, d in schedule.switch_events() if d == direction]
    if not events:
        raise AnalysisError(f"schedule contains no {direction} events")
    for t0 in events:
        if t0 + period <= series.size:
            rows.append(series[t0 : t0 + period])
        else:
            dropped += 1
    if not rows:
        raise AnalysisError(
            f"no {direction} event has a complete {period}-step window"
        )
    return np.stack(rows), dropped


@dataclass
class AlignedTrajectory:
    """Two-stage quantile aggregate of one signal for one switch direction."""

    direction: str
    period: int
    run_matrices: list[np.ndarray]
    run_medians: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    dropped_events: int = 0


def quantile_trajectories(
    run_matrices: list[np.ndarray], direction: str, dropped_events: int = 0
) -> AlignedTrajectory:
    """Median across events within each run, then median and IQR across runs.

    Percentiles use linear interpolation between order statistics.
    """
    if not run_matrices:
        raise AnalysisError("need at least one run")
    period = run_matrices[0].shape[1]
    run_medians = np.stack([np.median(m, axis=0) for m in run_matrices])
    return AlignedTrajectory(
        direction=direction,
        period=period,
        run_matrices=list(run_matrices),
        run_medians=run_medians,
        median=np.median(run_medians, axis=0),
        q25=np.percentile(run_medians, 25, axis=0, method="linear"),
        q75=np.percentile(run_medians, 75, axis=0, method="linear"),
        dropped_events=dropped_events,
    )


def kendall_trend(trajectory: np.ndarray) -> float:
    """Kendall tau-b of a trajectory against relative time; 0 when constant."""
    tau = kendalltau(np.arange(trajectory.size), trajectory).statistic
    return 0.0 if np.isnan(tau) else float(tau)


@dataclass
class HysteresisSummary:
    terminal_delta: dict[str, float]
    trend: dict[str, float]
    asymmetry: float

    def to_dict(self) -> dict:
        return {
            "terminal_delta": dict(self.terminal_delta),
            "trend": dict(self.trend),
            "asymmetry": self.asymmetry,
        }


def hysteresis_summary(
    traj_ab: np.ndarray, traj_ba: np.ndarray
) -> HysteresisSummary:
    """Directional statistics for a pair of median trajectories.

    The asymmetry is the mean absolute sum of the two trajectories after each
    is centered at its own first value: exactly zero when the directions are
    mirror images.
    """
    centered_ab = traj_ab - traj_ab[0]
    centered_ba = traj_ba - traj_ba[0]
    return HysteresisSummary(
        terminal_delta={
            "A->B": float(traj_ab[-1] - traj_ab[0]),
            "B->A": float(traj_ba[-1] - traj_ba[0]),
        },
        trend={
            "A->B": kendall_trend(traj_ab),
            "B->A": kendall_trend(traj_ba),
        },
        asymmetry=float(np.mean(np.abs(centered_ab + centered_ba))),
    )


# ---------------------------------------------------------------------------
# whole-run pipeline
# ---------------------------------------------------------------------------

@dataclass
class AnalysisResult:
    reference: ReferenceDirection
    trajectories: dict[str, dict[str, AlignedTrajectory]]
    summaries: dict[str, HysteresisSummary]
    occupancy: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    occupancy_windows: dict[str, tuple[int, int]] = field(default_factory=dict)


def analyze_test_logs(
    test_logs: list[TrajectoryLog],
    schedule: RegimeSchedule,
    exclude_first_k_after_switch: int = 0,
) -> AnalysisResult:
    """Run the full measurement pipeline over one set of per-seed test logs.

    Logs are processed in seed order, so the output is invariant (bit for
    bit) under permutation of the input list.
    """
    test_logs = sorted(test_logs, key=lambda entry: entry.seed)
    reference = reference_direction(
        test_logs, schedule, exclude_first_k_after_switch
    )
    per_run_series = {
        "g_score": [g_score_series(log.g_matrix(), reference.unit) for log in test_logs],
        "entropy_z": [
            entropy_z(log.column("entropy"), stats_start=schedule.warmup_steps)
            for log in test_logs
        ],
    }
    trajectories: dict[str, dict[str, AlignedTrajectory]] = {}
    summaries: dict[str, HysteresisSummary] = {}
    for signal, series_list in per_run_series.items():
        trajectories[signal] = {}
        for direction in DIRECTIONS:
            matrices = []
            dropped = 0
            for series in series_list:
                matrix, n_dropped = align_switches(series, schedule, direction)
                matrices.append(matrix)
                dropped += n_dropped
            trajectories[signal][direction] = quantile_trajectories(
                matrices, direction, dropped
            )
        summaries[signal] = hysteresis_summary(
            trajectories[signal]["A->B"].median,
            trajectories[signal]["B->A"].median,
        )
    return AnalysisResult(
        reference=reference, trajectories=trajectories, summaries=summaries
    )


def write_hysteresis_csv(result: AnalysisResult, path) -> None:
    lines = ["signal,direction,tau,median,q25,q75"]
    for signal in SIGNALS:
        for direction in DIRECTIONS:
            traj = result.trajectories[signal][direction]
            for tau in range(traj.period):
                lines.append(
                    f"{signal},{direction},{tau},{traj.median[tau]!r},"
                    f"{traj.q25[tau]!r},{traj.q75[tau]!r}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(result: AnalysisResult, path) -> None:
    doc = {
        "signals": {s: result.summaries[s].to_dict() for s in SIGNALS},
        "reference_direction": {
            "unit": result.reference.unit.tolist(),
            "mean_a": result.reference.mean_a.tolist(),
            "mean_b": result.reference.mean_b.tolist(),
        },
        "dropped_events": {
            s: {d: result.trajectories[s][d].dropped_events for d in DIRECTIONS}
            for s in SIGNALS
        },
    }
    if result.occupancy:
        doc["occupancy"] = result.occupancy
        doc["occupancy_windows"] = {
            k: list(v) for k, v in result.occupancy_windows.items()
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
