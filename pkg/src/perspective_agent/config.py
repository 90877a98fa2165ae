"""Run configuration: a flat key = value document with sections.

Every known key has a documented default; unknown keys or sections are
rejected. The fully resolved configuration is echoed into run manifests so
outputs are reproducible from the manifest alone.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentConfig
from .env import RegimeSchedule
from .errors import ConfigError
from .trainer import TrainConfig


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_seeds(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.replace(",", " ").split())


SCHEMA: dict[str, dict[str, tuple]] = {
    "agent": {
        "obs_dim": (int, 8),
        "action_count": (int, 5),
        "z_dim": (int, 16),
        "g_dim": (int, 12),
        "encoder_hidden": (int, 32),
        "decoder_hidden": (int, 32),
        "policy_hidden": (int, 32),
        "damping": (float, 0.1),
        "lambda_smooth": (float, 0.25),
        "lambda_actor": (float, 0.5),
        "lambda_entropy": (float, 0.01),
        "actor_sign": (str, "cost_penalizing"),
        "bptt_window": (int, 1),
        "dtype": (str, "float64"),
    },
    "train": {
        "episodes": (int, 200),
        "steps_per_episode": (int, 240),
        "lr": (float, 3e-4),
        "warmup_actor_steps": (int, 12_000),
        "clip_norm": (float, 1.0),
        "seeds": (_parse_seeds, (0, 1, 2, 3, 4)),
        "baseline_decay": (float, 0.99),
        "baseline_clip": (float, 5.0),
        "baseline_eps": (float, 1e-8),
        "baseline_scale_floor": (float, 1.0),
        "learn_during_test": (_parse_bool, True),
    },
    "schedule": {
        "warmup_steps": (int, 150),
        "test_steps": (int, 550),
        "period": (int, 40),
    },
    "analysis": {
        "exclude_first_k_after_switch": (int, 0),
        "early_episodes": (int, 20),
        "late_episodes": (int, 20),
    },
    "run": {
        "out_dir": (str, "runs"),
        "plots": (_parse_bool, True),
    },
}


@dataclass
class RunConfig:
    agent: AgentConfig
    train: TrainConfig
    schedule: RegimeSchedule
    exclude_first_k_after_switch: int
    early_episodes: int
    late_episodes: int
    out_dir: str
    plots: bool
    resolved: dict[str, dict[str, object]] = field(default_factory=dict)

    def config_hash(self) -> str:
        canonical = json.dumps(self.resolved, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def occupancy_windows(self) -> dict[str, tuple[int, int]]:
        episodes = self.train.episodes
        early = min(self.early_episodes, episodes)
        late = min(self.late_episodes, episodes)
        return {"early": (0, early), "late": (episodes - late, episodes)}


def _resolve(sections: dict[str, dict[str, str]]) -> dict[str, dict[str, object]]:
    for section in sections:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in sections[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
    resolved: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key, (parse, default) in keys.items():
            raw = sections.get(section, {}).get(key)
            if raw is None:
                resolved[section][key] = default
                continue
            try:
                resolved[section][key] = parse(raw)
            except (TypeError, ValueError) as err:
                raise ConfigError(
                    f"bad value for {key!r} in section [{section}]: {err}"
                ) from err
    return resolved


def _build(resolved: dict[str, dict[str, object]]) -> RunConfig:
    resolved = {s: dict(kv) for s, kv in resolved.items()}
    agent = AgentConfig(**resolved["agent"])
    train = TrainConfig(**resolved["train"])
    schedule = RegimeSchedule(**resolved["schedule"])
    json_safe = {
        s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
        for s, kv in resolved.items()
    }
    return RunConfig(
        agent=agent,
        train=train,
        schedule=schedule,
        exclude_first_k_after_switch=resolved["analysis"]["exclude_first_k_after_switch"],
        early_episodes=resolved["analysis"]["early_episodes"],
        late_episodes=resolved["analysis"]["late_episodes"],
        out_dir=resolved["run"]["out_dir"],
        plots=resolved["run"]["plots"],
        resolved=json_safe,
    )


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse a config file (or use all defaults) and apply CLI overrides.

    Overrides are {section: {key: raw_string}} and go through the same
    validation as file values.
    """
    sections: dict[str, dict[str, str]] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        sections = {s: dict(parser.items(s)) for s in parser.sections()}
    for section, kv in (overrides or {}).items():
        sections.setdefault(section, {}).update(kv)
    return _build(_resolve(sections))


QUICK_OVERRIDES = {
    "train": {
        "episodes": "10",
        "steps_per_episode": "120",
        "warmup_actor_steps": "300",
        "seeds": "0 1",
    },
}


def default_config_text() -> str:
    """A config file listing every key at its default value."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, default) in keys.items():
            if isinstance(default, tuple):
                value = " ".join(str(v) for v in default)
            else:
                value = str(default)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
