"""Reward-free grid-world agent with a slow global latent and hysteresis analysis."""

from .agent import AgentConfig, AgentState, LossBundle, PerspectiveAgent, sample_action
from .env import (
    REGIME_A,
    REGIME_B,
    GridWorld,
    Regime,
    RegimeSchedule,
    base_observation,
    regime_at,
    regime_sigma,
    zone_of,
)
from .trainer import (
    BaselineState,
    StepRecord,
    TrainConfig,
    TrajectoryLog,
    occupancy_stats,
    test_run,
    train_run,
)
from .analysis import (
    AlignedTrajectory,
    AnalysisResult,
    HysteresisSummary,
    ReferenceDirection,
    align_switches,
    analyze_test_logs,
    entropy_z,
    g_score,
    hysteresis_summary,
    quantile_trajectories,
    reference_direction,
)

__version__ = "0.1.0"
