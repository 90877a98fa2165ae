"""Tests for the online training/testing loops, baseline, logs, checkpoints."""

import numpy as np
import pytest

from perspective_agent.agent import AgentConfig
from perspective_agent.env import REGIME_A, REGIME_B, RegimeSchedule, regime_at, regime_sigma
from perspective_agent.errors import ConfigError, QueryError
from perspective_agent.trainer import (
    BaselineState,
    StepRecord,
    TrainConfig,
    TrajectoryLog,
    load_checkpoint,
    occupancy_stats,
    read_log_csv,
    save_checkpoint,
    train_run,
    write_log_csv,
)
from perspective_agent.trainer import test_run as run_test_phase

TINY = dict(z_dim=4, g_dim=4, encoder_hidden=6, decoder_hidden=6, policy_hidden=6)


def tiny_train(seed=0, episodes=2, steps=40, **kw):
    agent_cfg = AgentConfig(**TINY)
    train_cfg = TrainConfig(
        episodes=episodes, steps_per_episode=steps,
        warmup_actor_steps=kw.pop("warmup_actor_steps", 20), **kw,
    )
    return train_run(agent_cfg, train_cfg, seed=seed), agent_cfg, train_cfg


class TestBaseline:
    def test_first_advantage_is_zero(self):
        state = BaselineState()
        baseline, adv = state.update(3.7)
        assert baseline == 3.7
        assert adv == 0.0

    def test_constant_stream_advantage_vanishes(self):
        state = BaselineState()
        advs = [state.update(2.0)[1] for _ in range(500)]
        assert abs(advs[-1]) < 1e-12

    def test_spike_is_clipped(self):
        state = BaselineState(scale_floor=0.0)
        rng = np.random.default_rng(0)
        for _ in range(300):
            state.update(1.0 + 0.01 * rng.normal())
        _, adv = state.update(1.0 + 100.0)
        assert adv == 5.0

    def test_baseline_is_pre_update_mean(self):
        state = BaselineState()
        state.update(1.0)
        baseline, _ = state.update(9.0)
        assert baseline == 1.0

    def test_scale_floor_prevents_amplification(self):
        state = BaselineState(scale_floor=1.0)
        state.update(0.5)
        _, adv = state.update(0.6)
        assert abs(adv - 0.1) < 1e-12

    def test_peek_does_not_mutate(self):
        state = BaselineState()
        state.update(1.0)
        before = (state.mean, state.var)
        state.peek(100.0)
        assert (state.mean, state.var) == before

    def test_state_dict_round_trip(self):
        state = BaselineState()
        for c in (0.3, 0.9, 0.1):
            state.update(c)
        clone = BaselineState.from_state_dict(state.state_dict())
        assert clone == state


class TestTrainRun:
    def test_log_shape_and_step_indices(self):
        (agent, baseline, log), _, cfg = tiny_train()
        assert len(log) == cfg.total_steps
        assert [r.t for r in log.records] == list(range(cfg.total_steps))
        assert {r.phase for r in log.records} == {"train"}
        assert {r.regime for r in log.records} == {"A"}

    def test_one_update_per_step(self):
        (agent, _, log), _, cfg = tiny_train()
        assert agent.store.step == cfg.total_steps

    def test_same_seed_bit_identical(self):
        (a1, b1, log1), _, _ = tiny_train(seed=3)
        (a2, b2, log2), _, _ = tiny_train(seed=3)
        for name in a1.store.names():
            assert np.array_equal(a1.store[name].value, a2.store[name].value)
        assert b1 == b2
        for r1, r2 in zip(log1.records, log2.records):
            assert r1.l_total == r2.l_total
            assert np.array_equal(r1.g, r2.g)

    def test_global_latent_reinitialized_per_episode(self):
        # with zero damping the latent stays wherever each episode starts
        agent_cfg = AgentConfig(damping=1e-9, **TINY)
        train_cfg = TrainConfig(episodes=3, steps_per_episode=10, warmup_actor_steps=0)
        _, _, log = train_run(agent_cfg, train_cfg, seed=0)
        g = np.stack([r.g for r in log.records])
        assert np.max(np.abs(g)) < 1e-6

    def test_noiseless_prediction_loss_decreases(self):
        agent_cfg = AgentConfig(lambda_actor=0.0, lambda_entropy=0.0, **TINY)
        train_cfg = TrainConfig(
            episodes=10, steps_per_episode=200, warmup_actor_steps=0, seeds=(0,)
        )
        import perspective_agent.trainer as trainer_mod
        from perspective_agent.env import GridWorld

        original = trainer_mod.GridWorld

        class NoiselessWorld(GridWorld):
            def __init__(self, sigma, rng):
                super().__init__(sigma=(0.0, 0.0, 0.0), rng=rng)

        trainer_mod.GridWorld = NoiselessWorld
        try:
            _, _, log = train_run(agent_cfg, train_cfg, seed=0)
        finally:
            trainer_mod.GridWorld = original
        pred = log.column("l_pred")
        assert np.median(pred[-1000:]) < np.median(pred[:1000])

    def test_actor_gradient_gated_during_warmup(self):
        # policy weights may move only through the entropy term during warm-up;
        # a run with lambda_entropy=0 must keep them frozen until the gate opens
        agent_cfg = AgentConfig(lambda_entropy=0.0, **TINY)
        warmup = 30
        train_cfg = TrainConfig(
            episodes=2, steps_per_episode=30, warmup_actor_steps=warmup
        )
        agent, _, _ = train_run(agent_cfg, train_cfg, seed=5)
        fresh = train_run(
            agent_cfg,
            TrainConfig(episodes=1, steps_per_episode=warmup, warmup_actor_steps=warmup),
            seed=5,
        )[0]
        init_agent = __import__(
            "perspective_agent.agent", fromlist=["PerspectiveAgent"]
        ).PerspectiveAgent(agent_cfg, np.random.default_rng(0))
        from perspective_agent.trainer import stream_rng, STREAM_INIT

        reference = __import__(
            "perspective_agent.agent", fromlist=["PerspectiveAgent"]
        ).PerspectiveAgent(agent_cfg, stream_rng(5, STREAM_INIT))
        for name in fresh.parameter_group("pol."):
            assert np.array_equal(fresh.store[name].value, reference.store[name].value)
        moved = any(
            not np.array_equal(agent.store[n].value, reference.store[n].value)
            for n in agent.parameter_group("pol.")
        )
        assert moved


class TestTestRun:
    def _trained(self, seed=0):
        (agent, baseline, _), agent_cfg, train_cfg = tiny_train(seed=seed)
        return agent, baseline, train_cfg

    def test_700_rows_with_warmup_regime(self):
        agent, baseline, cfg = self._trained()
        schedule = RegimeSchedule()
        log = run_test_phase(agent, baseline, schedule, seed=0, train_config=cfg)
        assert len(log) == 700
        assert all(r.regime == "A" for r in log.records[:150])
        assert log.records[150].regime == "B"

    def test_switch_count_in_log(self):
        agent, baseline, cfg = self._trained()
        log = run_test_phase(agent, baseline, RegimeSchedule(period=40), seed=0, train_config=cfg)
        labels = [r.regime for r in log.records]
        toggles = sum(1 for a, b in zip(labels, labels[1:]) if a != b)
        assert toggles == 14

    def test_sigma_composition_at_t200(self):
        schedule = RegimeSchedule(period=40)
        regime = regime_at(200, schedule)
        assert regime.label == "A"
        assert regime_sigma(regime, 2) == 0.05

    def test_freeze_learning_keeps_weights(self):
        agent, baseline, cfg = self._trained()
        before = {n: agent.store[n].value.copy() for n in agent.store.names()}
        run_test_phase(agent, baseline, RegimeSchedule(), seed=0, train_config=cfg, learn=False)
        for name, value in before.items():
            assert np.array_equal(agent.store[name].value, value)

    def test_learning_updates_weights_by_default(self):
        agent, baseline, cfg = self._trained()
        before = {n: agent.store[n].value.copy() for n in agent.store.names()}
        run_test_phase(agent, baseline, RegimeSchedule(), seed=0, train_config=cfg)
        assert any(
            not np.array_equal(agent.store[n].value, before[n])
            for n in agent.store.names()
        )


class TestOccupancy:
    def _synthetic_log(self, zones, episodes):
        records = [
            StepRecord(
                t=i, episode=e, phase="train", regime="A", zone=z, col=z * 5,
                row=0, action=4, l_pred=0.0, l_smooth=0.0, l_actor=0.0,
                entropy=1.0, l_total=0.0, cost=0.0, baseline=0.0, g=np.zeros(4),
            )
            for i, (z, e) in enumerate(zip(zones, episodes))
        ]
        return TrajectoryLog(config_hash="", seed=0, phase="train", records=records)

    def test_pinned_agent_single_zone(self):
        log = self._synthetic_log([1] * 30, [0] * 10 + [1] * 10 + [2] * 10)
        assert np.array_equal(occupancy_stats(log, (0, 3)), [0.0, 1.0, 0.0])

    def test_alternating_zones(self):
        log = self._synthetic_log([0, 1, 2] * 10, [0] * 30)
        assert np.allclose(occupancy_stats(log, (0, 1)), [1 / 3] * 3)

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        log = self._synthetic_log(rng.integers(0, 3, 100).tolist(), [0] * 100)
        assert abs(occupancy_stats(log, (0, 1)).sum() - 1.0) < 1e-12

    def test_empty_range_raises(self):
        log = self._synthetic_log([0], [0])
        with pytest.raises(QueryError):
            occupancy_stats(log, (5, 6))


class TestLogCsv:
    def test_round_trip_exact(self, tmp_path):
        (_, _, log), _, _ = tiny_train(seed=2)
        path = tmp_path / "log.csv"
        write_log_csv(log, path)
        loaded = read_log_csv(path, seed=2)
        assert len(loaded) == len(log)
        for a, b in zip(log.records, loaded.records):
            assert a.t == b.t and a.zone == b.zone and a.action == b.action
            assert a.l_total == b.l_total and a.cost == b.cost
            assert np.array_equal(a.g, b.g)

    def test_malformed_row_reports_number(self, tmp_path):
        (_, _, log), _, _ = tiny_train(seed=2)
        path = tmp_path / "log.csv"
        write_log_csv(log, path)
        lines = path.read_text().splitlines()
        lines[3] = lines[3] + ",extra"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigError, match="row 4"):
            read_log_csv(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError, match="header"):
            read_log_csv(path)


class TestCheckpoint:
    def test_round_trip_bit_identical_continuation(self, tmp_path):
        (agent, baseline, _), agent_cfg, train_cfg = tiny_train(seed=4)
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, agent, baseline)
        loaded_agent, loaded_baseline = load_checkpoint(path)
        for name in agent.store.names():
            assert np.array_equal(
                agent.store[name].value, loaded_agent.store[name].value
            )
            assert np.array_equal(
                agent.store.moment1[name], loaded_agent.store.moment1[name]
            )
        assert loaded_agent.store.step == agent.store.step
        assert loaded_baseline == baseline
        direct = run_test_phase(agent, baseline, RegimeSchedule(), 4, train_config=train_cfg)
        resumed = run_test_phase(
            loaded_agent, loaded_baseline, RegimeSchedule(), 4, train_config=train_cfg
        )
        for r1, r2 in zip(direct.records, resumed.records):
            assert r1.l_total == r2.l_total
            assert np.array_equal(r1.g, r2.g)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "ckpt.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(ConfigError):
            load_checkpoint(path)


class TestTrainConfigValidation:
    def test_warmup_exceeding_total_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(episodes=1, steps_per_episode=10, warmup_actor_steps=100)

    def test_default_total_is_48000(self):
        assert TrainConfig().total_steps == 48_000

    def test_negative_seed_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(seeds=(-1,))
