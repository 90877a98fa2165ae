"""File-level orchestration: train/test/analyze stages with manifests.

Each stage writes CSV/JSON/SVG artifacts plus a manifest carrying the fully
resolved configuration, schema versions, and content hashes of its inputs
and outputs, so the three stages form a verifiable hash chain. Seeds fan
out over a process pool capped by the PA_THREADS environment variable.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import RunConfig
from .env import RegimeSchedule
from .errors import ConfigError
from .svgplot import hysteresis_figure, occupancy_figure
from .trainer import (
    CSV_SCHEMA_VERSION,
    CHECKPOINT_FORMAT,
    TrajectoryLog,
    load_checkpoint,
    occupancy_stats,
    read_log_csv,
    save_checkpoint,
    test_run,
    train_run,
    write_log_csv,
)

MANIFEST_SCHEMAS = {"csv": CSV_SCHEMA_VERSION, "checkpoint": CHECKPOINT_FORMAT}


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _pool_size(n_tasks: int) -> int:
    cap = os.environ.get("PA_THREADS", "")
    if cap.strip():
        return max(1, min(int(cap), n_tasks))
    return max(1, min(os.cpu_count() or 1, n_tasks))


def write_manifest(
    path, phase: str, config: RunConfig, outputs: dict[str, str],
    inputs: dict[str, str] | None = None, extra: dict | None = None,
    wall_clock_s: float = 0.0,
) -> None:
    doc = {
        "phase": phase,
        "schemas": MANIFEST_SCHEMAS,
        "config": config.resolved,
        "config_hash": config.config_hash(),
        "outputs": outputs,
        "inputs": inputs or {},
        "wall_clock_s": wall_clock_s,
        "created_unix": time.time(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def read_manifest(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    schemas = doc.get("schemas", {})
    if schemas.get("csv") != CSV_SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: csv schema {schemas.get('csv')!r} does not match "
            f"{CSV_SCHEMA_VERSION!r}"
        )
    return doc


# ---------------------------------------------------------------------------
# train stage
# ---------------------------------------------------------------------------

def _train_worker(args) -> tuple[int, dict[str, str]]:
    config, seed, out_dir = args
    agent, baseline, log = train_run(
        config.agent, config.train, seed, config_hash=config.config_hash()
    )
    out = Path(out_dir)
    log_path = out / f"train_seed{seed}.csv"
    ckpt_path = out / f"checkpoint_seed{seed}.json"
    write_log_csv(log, log_path)
    save_checkpoint(ckpt_path, agent, baseline)
    return seed, {p.name: sha256_file(p) for p in (log_path, ckpt_path)}


def run_train(config: RunConfig, out_dir) -> dict[str, str]:
    """Train every configured seed; returns {filename: sha256} of outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(config.train.seeds)
    started = time.time()
    outputs: dict[str, str] = {}
    jobs = [(config, seed, str(out)) for seed in seeds]
    if len(jobs) == 1:
        results = [_train_worker(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=_pool_size(len(jobs))) as pool:
            results = list(pool.map(_train_worker, jobs))
    for _, hashes in sorted(results):
        outputs.update(hashes)
    write_manifest(
        out / "manifest_train.json", "train", config, outputs,
        extra={"seeds": seeds}, wall_clock_s=time.time() - started,
    )
    return outputs


# ---------------------------------------------------------------------------
# test stage
# ---------------------------------------------------------------------------

def _test_worker(args) -> tuple[int, dict[str, str]]:
    config, seed, out_dir, ckpt_dir, period, learn = args
    ckpt_path = Path(ckpt_dir) / f"checkpoint_seed{seed}.json"
    if not ckpt_path.exists():
        raise ConfigError(f"missing checkpoint: {ckpt_path}")
    agent, baseline = load_checkpoint(ckpt_path)
    schedule = RegimeSchedule(
        warmup_steps=config.schedule.warmup_steps,
        test_steps=config.schedule.test_steps,
        period=period,
    )
    log = test_run(
        agent, baseline, schedule, seed,
        train_config=config.train, learn=learn,
        config_hash=config.config_hash(),
    )
    out_path = Path(out_dir) / f"test_P{period}_seed{seed}.csv"
    write_log_csv(log, out_path)
    return seed, {out_path.name: sha256_file(out_path)}


def run_test(
    config: RunConfig, out_dir, ckpt_dir=None, period: int | None = None,
    learn: bool | None = None,
) -> dict[str, str]:
    """Regime-switching test runs from per-seed checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = Path(ckpt_dir) if ckpt_dir is not None else out
    period = period if period is not None else config.schedule.period
    learn = config.train.learn_during_test if learn is None else learn
    seeds = list(config.train.seeds)
    started = time.time()
    inputs = {}
    for seed in seeds:
        ckpt = ckpt_dir / f"checkpoint_seed{seed}.json"
        if not ckpt.exists():
            raise ConfigError(f"missing checkpoint: {ckpt}")
        inputs[ckpt.name] = sha256_file(ckpt)
    jobs = [(config, seed, str(out), str(ckpt_dir), period, learn) for seed in seeds]
    if len(jobs) == 1:
        results = [_test_worker(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=_pool_size(len(jobs))) as pool:
            results = list(pool.map(_test_worker, jobs))
    outputs: dict[str, str] = {}
    for _, hashes in sorted(results):
        outputs.update(hashes)
    write_manifest(
        out / f"manifest_test_P{period}.json", "test", config, outputs,
        inputs=inputs,
        extra={"seeds": seeds, "period": period, "learn_during_test": learn},
        wall_clock_s=time.time() - started,
    )
    return outputs


# ---------------------------------------------------------------------------
# analysis stage
# ---------------------------------------------------------------------------

def load_stage_logs(
    log_dir, kind: str, seeds, period: int | None = None
) -> list[TrajectoryLog]:
    logs = []
    for seed in seeds:
        name = (
            f"train_seed{seed}.csv" if kind == "train"
            else f"test_P{period}_seed{seed}.csv"
        )
        path = Path(log_dir) / name
        if not path.exists():
            raise ConfigError(f"missing log: {path}")
        logs.append(read_log_csv(path, seed=seed))
    return logs


def occupancy_table(
    train_logs: list[TrajectoryLog], windows: dict[str, tuple[int, int]]
) -> dict[str, dict[str, list[float]]]:
    table: dict[str, dict[str, list[float]]] = {}
    for window, episode_range in windows.items():
        fractions = np.stack([occupancy_stats(log, episode_range) for log in train_logs])
        table[window] = {f"Z{z}": fractions[:, z].tolist() for z in range(3)}
    return table


def write_occupancy_csv(
    table: dict[str, dict[str, list[float]]], seeds, path
) -> None:
    lines = ["window,zone,seed,fraction"]
    for window in table:
        for zone in ("Z0", "Z1", "Z2"):
            for seed, fraction in zip(seeds, table[window][zone]):
                lines.append(f"{window},{zone},{seed},{fraction!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_analysis(
    config: RunConfig, log_dir, out_dir=None, period: int | None = None,
    plots: bool | None = None,
) -> an.AnalysisResult:
    """Hysteresis measurements plus occupancy summary over a finished run dir."""
    log_dir = Path(log_dir)
    out = Path(out_dir) if out_dir is not None else log_dir
    out.mkdir(parents=True, exist_ok=True)
    period = period if period is not None else config.schedule.period
    plots = config.plots if plots is None else plots
    seeds = list(config.train.seeds)
    started = time.time()

    for manifest_name in ("manifest_train.json", f"manifest_test_P{period}.json"):
        manifest_path = log_dir / manifest_name
        if manifest_path.exists():
            read_manifest(manifest_path)

    schedule = RegimeSchedule(
        warmup_steps=config.schedule.warmup_steps,
        test_steps=config.schedule.test_steps,
        period=period,
    )
    test_logs = load_stage_logs(log_dir, "test", seeds, period)
    result = an.analyze_test_logs(
        test_logs, schedule,
        exclude_first_k_after_switch=config.exclude_first_k_after_switch,
    )
    windows = config.occupancy_windows()
    train_logs = load_stage_logs(log_dir, "train", seeds)
    result.occupancy = occupancy_table(train_logs, windows)
    result.occupancy_windows = windows

    inputs = {}
    for seed in seeds:
        for name in (f"train_seed{seed}.csv", f"test_P{period}_seed{seed}.csv"):
            inputs[name] = sha256_file(log_dir / name)

    suffix = "" if period == config.schedule.period else f"_P{period}"
    hyst_path = out / f"hysteresis{suffix}.csv"
    summary_path = out / f"summary{suffix}.json"
    occ_path = out / f"occupancy{suffix}.csv"
    an.write_hysteresis_csv(result, hyst_path)
    an.write_summary_json(result, summary_path)
    write_occupancy_csv(result.occupancy, seeds, occ_path)
    outputs = {p.name: sha256_file(p) for p in (hyst_path, summary_path, occ_path)}
    if plots:
        occ_fig = out / f"fig_occupancy{suffix}.svg"
        hyst_fig = out / f"fig_hysteresis{suffix}.svg"
        occ_fig.write_text(occupancy_figure(result.occupancy, windows))
        hyst_fig.write_text(hysteresis_figure(result.trajectories))
        outputs[occ_fig.name] = sha256_file(occ_fig)
        outputs[hyst_fig.name] = sha256_file(hyst_fig)
    write_manifest(
        out / f"manifest_analysis{suffix}.json", "analysis", config, outputs,
        inputs=inputs, extra={"seeds": seeds, "period": period},
        wall_clock_s=time.time() - started,
    )
    return result
