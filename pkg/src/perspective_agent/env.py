"""Three-zone grid world with zone-dependent observation noise.

The grid is 15 columns by 9 rows, split into three vertical bands of five
columns each (Z0 left, Z1 middle, Z2 right). Movement is deterministic with
clamping at the walls; only the observation noise differs between zones.
Two noise configurations (regimes) and a periodic switching schedule drive
the regime-switching protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import QueryError

WIDTH = 15
HEIGHT = 9
ZONE_WIDTH = 5
OBS_DIM = 8
START_POSITION = (7, 4)

ACTIONS = ("up", "down", "left", "right", "stay")
ACTION_COUNT = len(ACTIONS)
ACTION_UP, ACTION_DOWN, ACTION_LEFT, ACTION_RIGHT, ACTION_STAY = range(5)
_MOVES = {
    ACTION_UP: (0, -1),
    ACTION_DOWN: (0, 1),
    ACTION_LEFT: (-1, 0),
    ACTION_RIGHT: (1, 0),
    ACTION_STAY: (0, 0),
}


def zone_of(col: int) -> int:
    """Zone index of a column: bands of five columns, left to right."""
    if not 0 <= col < WIDTH:
        raise QueryError(f"column {col} out of bounds")
    return col // ZONE_WIDTH


def action_onehot(action: int) -> np.ndarray:
    p = np.zeros(ACTION_COUNT)
    p[action] = 1.0
    return p


def base_observation(position: tuple[int, int]) -> np.ndarray:
    """Noise-free 8-channel observation for a cell.

    Channels: normalized column, normalized row, one-hot zone (3), a sine of
    the column phase, a sine of the row phase, and a constant bias channel.
    Injective over the 135 cells, and zone membership is directly decodable.
    """
    col, row = position
    if not (0 <= col < WIDTH and 0 <= row < HEIGHT):
        raise QueryError(f"position {position} out of bounds")
    zone = np.zeros(3)
    zone[zone_of(col)] = 1.0
    return np.array(
        [
            col / (WIDTH - 1),
            row / (HEIGHT - 1),
            zone[0],
            zone[1],
            zone[2],
            np.sin(2.0 * np.pi * col / WIDTH),
            np.sin(2.0 * np.pi * row / HEIGHT),
            1.0,
        ]
    )


@dataclass(frozen=True)
class Regime:
    """A per-zone noise configuration."""

    label: str
    sigma: tuple[float, float, float]


REGIME_A = Regime("A", (0.60, 0.30, 0.05))
REGIME_B = Regime("B", (0.05, 0.30, 0.60))


def regime_sigma(regime: Regime, zone: int) -> float:
    if not 0 <= zone <= 2:
        raise QueryError(f"zone {zone} out of range")
    return regime.sigma[zone]


@dataclass(frozen=True)
class RegimeSchedule:
    """Warm-up in regime A followed by periodic A/B toggling.

    The regime toggles at warmup_steps and every `period` steps thereafter,
    starting with an A-to-B switch, for as long as the run lasts.
    """

    warmup_steps: int = 150
    test_steps: int = 550
    period: int = 40

    def __post_init__(self):
        if self.period < 1 or self.warmup_steps < 0 or self.test_steps < 1:
            raise QueryError(f"invalid schedule {self}")

    @property
    def total_steps(self) -> int:
        return self.warmup_steps + self.test_steps

    @property
    def switch_times(self) -> list[int]:
        return list(range(self.warmup_steps, self.total_steps, self.period))

    def switch_events(self) -> list[tuple[int, str]]:
        """(absolute step, direction) for every toggle, in order."""
        return [
            (t, "A->B" if k % 2 == 0 else "B->A")
            for k, t in enumerate(self.switch_times)
        ]

    def full_window_events(self) -> list[tuple[int, str]]:
        """Toggles followed by a complete period inside the run."""
        return [
            (t, d) for t, d in self.switch_events() if t + self.period <= self.total_steps
        ]


def regime_at(t: int, schedule: RegimeSchedule) -> Regime:
    """Active regime at absolute step t."""
    if not 0 <= t < schedule.total_steps:
        raise QueryError(
            f"step {t} outside schedule range [0, {schedule.total_steps})"
        )
    if t < schedule.warmup_steps:
        return REGIME_A
    segment = (t - schedule.warmup_steps) // schedule.period
    return REGIME_B if segment % 2 == 0 else REGIME_A


class GridWorld:
    """Deterministic movement, Gaussian observation noise per zone.

    The noise stream draws standard normals and scales by the current zone
    sigma, so the underlying random sequence does not depend on the noise
    configuration.
    """

    def __init__(
        self,
        sigma: tuple[float, float, float] = REGIME_A.sigma,
        rng: np.random.Generator | None = None,
        seed: int | None = None,
    ):
        if rng is not None and seed is not None:
            raise QueryError("pass either rng or seed, not both")
        if rng is None:
            rng = np.random.default_rng(seed)
        self.rng = rng
        self.sigma = tuple(float(s) for s in sigma)
        self.position = START_POSITION

    def set_sigma(self, sigma: tuple[float, float, float]) -> None:
        self.sigma = tuple(float(s) for s in sigma)

    def _observe(self) -> np.ndarray:
        s = self.sigma[zone_of(self.position[0])]
        noise = s * self.rng.standard_normal(OBS_DIM)
        return base_observation(self.position) + noise

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Move the agent to the center of Z1; optionally reseed the noise rng.

        Without a seed the noise stream continues, so episode boundaries within
        one run stay on a single deterministic stream.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.position = START_POSITION
        return self._observe()

    def step(self, action: int) -> np.ndarray:
        """Apply a unit move (clamped at walls) and return the new observation."""
        dc, dr = _MOVES[int(action)]
        col = min(max(self.position[0] + dc, 0), WIDTH - 1)
        row = min(max(self.position[1] + dr, 0), HEIGHT - 1)
        self.position = (col, row)
        return self._observe()

    @property
    def zone(self) -> int:
        return zone_of(self.position[0])
