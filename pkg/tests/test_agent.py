"""Tests for the agent architecture, sampling, and loss terms."""

import math

import numpy as np
import pytest

from perspective_agent import diffcore as dc
from perspective_agent.agent import (
    AgentConfig,
    PerspectiveAgent,
    prediction_cost,
    sample_action,
)
from perspective_agent.diffcore import backward, finite_diff_check, StopCache
from perspective_agent.errors import ConfigError


def make_agent(seed=0, **kwargs) -> PerspectiveAgent:
    config = AgentConfig(**kwargs)
    return PerspectiveAgent(config, np.random.default_rng(seed))


def tiny_agent(seed=0, **kwargs) -> PerspectiveAgent:
    defaults = dict(z_dim=4, g_dim=4, encoder_hidden=6, decoder_hidden=6, policy_hidden=6)
    defaults.update(kwargs)
    return make_agent(seed, **defaults)


def zero_group(agent, prefix):
    for name in agent.parameter_group(prefix):
        agent.store[name].value[...] = 0.0


def onehot(i, n=5):
    v = np.zeros(n)
    v[i] = 1.0
    return v


class TestConfigValidation:
    def test_defaults_valid(self):
        AgentConfig()

    def test_bad_damping(self):
        with pytest.raises(ConfigError):
            AgentConfig(damping=0.0)
        with pytest.raises(ConfigError):
            AgentConfig(damping=1.5)

    def test_bad_dims(self):
        with pytest.raises(ConfigError):
            AgentConfig(z_dim=0)

    def test_bad_actor_sign(self):
        with pytest.raises(ConfigError):
            AgentConfig(actor_sign="other")

    def test_state_dim(self):
        assert AgentConfig().state_dim == 16 + 5 + 12


class TestEncoder:
    def test_zero_weights_give_zero_latent(self):
        agent = tiny_agent()
        zero_group(agent, "enc.")
        z = agent.encode(np.ones(8), onehot(0))
        assert np.array_equal(z.value, np.zeros(4))

    def test_deterministic(self):
        agent = tiny_agent()
        x, p = np.linspace(0, 1, 8), onehot(2)
        assert np.array_equal(agent.encode(x, p).value, agent.encode(x, p).value)

    def test_matches_naive_forward(self):
        agent = tiny_agent(seed=3)
        x, p = np.linspace(-1, 1, 8), onehot(4)
        w1 = agent.store["enc.l1.w"].value
        b1 = agent.store["enc.l1.b"].value
        w2 = agent.store["enc.l2.w"].value
        b2 = agent.store["enc.l2.b"].value
        inp = np.concatenate([x, p])
        naive = np.tanh(w2 @ np.tanh(w1 @ inp + b1) + b2)
        assert np.max(np.abs(agent.encode(x, p).value - naive)) < 1e-12


class TestGlobalUpdate:
    def test_zero_damping_freezes_latent(self):
        agent = tiny_agent()
        g_prev = np.array([0.3, -0.2, 0.9, 0.0])
        fast = dc.constant(np.ones(4))
        _, g = agent.update_global(fast, onehot(1), g_prev, damping=0.0)
        assert np.array_equal(g.value, g_prev)

    def test_full_damping_equals_candidate(self):
        agent = tiny_agent()
        g_prev = np.array([0.3, -0.2, 0.9, 0.0])
        fast = dc.constant(np.ones(4))
        candidate, g = agent.update_global(fast, onehot(1), g_prev, damping=1.0)
        assert np.allclose(g.value, candidate.value, atol=1e-15)

    def test_update_norm_algebra(self):
        agent = tiny_agent(seed=7)
        rng = np.random.default_rng(17)
        d = agent.config.damping
        for _ in range(200):
            fast = dc.constant(rng.normal(size=4))
            g_prev = rng.normal(size=4)
            candidate, g = agent.update_global(fast, onehot(rng.integers(5)), g_prev)
            lhs = np.linalg.norm(g.value - g_prev)
            rhs = d * np.linalg.norm(candidate.value - g_prev)
            assert abs(lhs - rhs) < 1e-10

    def test_candidate_bounded_by_gate_structure(self):
        agent = tiny_agent(seed=11)
        rng = np.random.default_rng(23)
        for _ in range(50):
            fast = dc.constant(rng.normal(size=4))
            g_prev = np.clip(rng.normal(size=4), -1, 1)
            candidate, _ = agent.update_global(fast, onehot(0), g_prev)
            assert np.all(np.abs(candidate.value) <= 1.0 + 1e-12)


class TestPolicy:
    def test_zero_weights_give_uniform(self):
        agent = tiny_agent()
        zero_group(agent, "pol.")
        fast = agent.encode(np.ones(8), onehot(0))
        _, g = agent.update_global(fast, onehot(0), np.zeros(4))
        _, _, probs = agent.policy_forward(fast, onehot(0), g)
        assert np.allclose(probs.value, 0.2, atol=1e-15)

    def test_state_layout(self):
        agent = tiny_agent(seed=5)
        fast = agent.encode(np.linspace(0, 1, 8), onehot(3))
        _, g = agent.update_global(fast, onehot(3), np.zeros(4))
        state, _, _ = agent.policy_forward(fast, onehot(3), g)
        c = agent.config
        assert np.array_equal(state.value[: c.z_dim], fast.value)
        assert np.array_equal(state.value[c.z_dim : c.z_dim + 5], onehot(3))
        assert np.array_equal(state.value[c.z_dim + 5 :], g.value)

    def test_logits_blocked_from_upstream_weights(self):
        agent = tiny_agent(seed=9)
        fast = agent.encode(np.linspace(-1, 1, 8), onehot(1))
        _, g = agent.update_global(fast, onehot(1), np.zeros(4))
        _, logits, _ = agent.policy_forward(fast, onehot(1), g)
        backward(dc.pick(logits, 0))
        for prefix in ("enc.", "gru.", "dec."):
            for name in agent.parameter_group(prefix):
                assert np.all(agent.store[name].grad == 0.0), name
        assert any(
            np.any(agent.store[name].grad != 0.0)
            for name in agent.parameter_group("pol.")
        )


class TestSampling:
    def test_degenerate_distribution(self):
        rng = np.random.default_rng(0)
        probs = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
        assert all(sample_action(probs, rng) == 0 for _ in range(100))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(1)
        probs = np.full(5, 0.2)
        draws = np.array([sample_action(probs, rng) for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=5) / draws.size
        assert np.all(np.abs(freqs - 0.2) < 0.01)

    def test_same_seed_same_sequence(self):
        probs = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
        a = [sample_action(probs, np.random.default_rng(7)) for _ in range(1)]
        seq1 = [sample_action(probs, rng) for rng in [np.random.default_rng(7)] for _ in range(10)]
        rng1, rng2 = np.random.default_rng(7), np.random.default_rng(7)
        seq1 = [sample_action(probs, rng1) for _ in range(50)]
        seq2 = [sample_action(probs, rng2) for _ in range(50)]
        assert seq1 == seq2


class TestDecoder:
    def test_zero_weights_zero_prediction(self):
        agent = tiny_agent()
        zero_group(agent, "dec.")
        pred = agent.decode(dc.constant(np.ones(4)), 2)
        assert np.array_equal(pred.value, np.zeros(8))

    def test_distinct_actions_distinct_predictions(self):
        agent = tiny_agent(seed=13)
        g = dc.constant(np.array([0.1, -0.4, 0.7, 0.2]))
        preds = [agent.decode(g, a).value for a in range(5)]
        for i in range(5):
            for j in range(i + 1, 5):
                assert not np.array_equal(preds[i], preds[j])

    def test_deterministic(self):
        agent = tiny_agent(seed=13)
        g = dc.constant(np.array([0.1, -0.4, 0.7, 0.2]))
        assert np.array_equal(agent.decode(g, 1).value, agent.decode(g, 1).value)


class TestMixture:
    def test_onehot_weights_select_one_prediction(self):
        agent = tiny_agent(seed=13)
        g = dc.constant(np.array([0.1, -0.4, 0.7, 0.2]))
        preds = agent.decode_all(g)
        weights = dc.constant(onehot(3))
        mix = dc.weighted_sum(preds, weights.value)
        assert np.array_equal(mix.value, preds[3].value)

    def test_uniform_weights_over_identical_predictions(self):
        preds = [dc.constant(np.full(8, 0.5)) for _ in range(5)]
        mix = dc.weighted_sum(preds, np.full(5, 0.2))
        assert np.allclose(mix.value, 0.5, atol=1e-15)

    def test_mixture_loss_never_reaches_policy(self):
        agent = tiny_agent(seed=19)
        rng = np.random.default_rng(3)
        state = agent.forward(rng.normal(size=8), onehot(0), np.zeros(4))
        preds = agent.decode_all(state.global_latent)
        mix = agent.mixture_prediction(preds, state.probs)
        loss = dc.mse(mix, dc.constant(rng.normal(size=8)))
        backward(loss)
        for name in agent.parameter_group("pol."):
            assert np.all(agent.store[name].grad == 0.0)


class TestLosses:
    def _bundle(self, agent, rng, actor_enabled=True, advantage=0.5):
        state = agent.forward(rng.normal(size=8), onehot(0), np.zeros(agent.config.g_dim))
        state.action = 2
        preds = agent.decode_all(state.global_latent)
        next_obs = rng.normal(size=8)
        cost = prediction_cost(preds[2].value, next_obs)
        return agent.compute_losses(
            state, preds, next_obs, np.zeros(agent.config.g_dim),
            advantage, cost, 0.0, actor_enabled,
        ), state, preds, next_obs

    def test_perfect_prediction_zero_cost(self):
        agent = tiny_agent(seed=23)
        rng = np.random.default_rng(4)
        state = agent.forward(rng.normal(size=8), onehot(1), np.zeros(4))
        state.action = 0
        preds = agent.decode_all(state.global_latent)
        next_obs = preds[0].value.copy()
        bundle = agent.compute_losses(
            state, preds, next_obs, np.zeros(4), 0.0,
            prediction_cost(preds[0].value, next_obs), 0.0,
        )
        assert bundle.cost == 0.0
        mix_probs = state.probs.value
        if np.allclose(mix_probs, onehot(0)):
            assert bundle.pred.value == 0.0

    def test_identical_latents_zero_smoothness(self):
        agent = tiny_agent(seed=23)
        rng = np.random.default_rng(4)
        state = agent.forward(rng.normal(size=8), onehot(1), np.zeros(4))
        state.action = 0
        preds = agent.decode_all(state.global_latent)
        bundle = agent.compute_losses(
            state, preds, rng.normal(size=8), state.global_latent.value.copy(),
            0.0, 0.0, 0.0,
        )
        assert bundle.smooth.value == 0.0

    def test_uniform_policy_max_entropy(self):
        agent = tiny_agent()
        zero_group(agent, "pol.")
        rng = np.random.default_rng(4)
        bundle, _, _, _ = self._bundle(agent, rng)
        assert abs(bundle.entropy.value - math.log(5)) < 1e-12

    def test_entropy_bounds_on_random_passes(self):
        agent = tiny_agent(seed=29)
        rng = np.random.default_rng(6)
        for _ in range(100):
            bundle, _, _, _ = self._bundle(agent, rng)
            assert 0.0 <= bundle.entropy.value <= math.log(5) + 1e-12

    def test_actor_sign_flag(self):
        rng_values = np.random.default_rng(8)
        obs = rng_values.normal(size=8)
        next_obs = rng_values.normal(size=8)
        results = {}
        for sign in ("cost_penalizing", "paper_literal"):
            agent = tiny_agent(seed=31, actor_sign=sign)
            state = agent.forward(obs, onehot(0), np.zeros(4))
            state.action = 1
            preds = agent.decode_all(state.global_latent)
            bundle = agent.compute_losses(
                state, preds, next_obs, np.zeros(4), 0.7, 0.0, 0.0
            )
            results[sign] = float(bundle.actor.value)
        assert results["cost_penalizing"] == pytest.approx(-results["paper_literal"])

    def test_warmup_gate_excludes_actor_from_total(self):
        agent = tiny_agent(seed=37)
        rng = np.random.default_rng(9)
        gated, state, preds, next_obs = self._bundle(agent, rng, actor_enabled=False)
        manual = dc.add(
            gated.pred,
            dc.scale(gated.smooth, agent.config.lambda_smooth),
        )
        manual = dc.sub(manual, dc.scale(gated.entropy, agent.config.lambda_entropy))
        assert float(gated.total.value) == float(manual.value)
        agent.store.zero_grads()
        backward(gated.total)
        gated_grads = {n: agent.store[n].grad.copy() for n in agent.store.names()}
        agent.store.zero_grads()
        backward(manual)
        for name in agent.store.names():
            assert np.array_equal(gated_grads[name], agent.store[name].grad)

    def test_total_gradcheck_on_tiny_instance(self):
        # instance picked so no gradient component sits in the band where
        # central-difference cancellation noise dominates the relative error
        agent = tiny_agent(seed=1)
        rng = np.random.default_rng(101)
        obs = rng.normal(size=8)
        g_prev = rng.normal(size=4) * 0.5
        next_obs = rng.normal(size=8)
        cache = StopCache()

        def build(stop_cache):
            state = agent.forward(obs, onehot(2), g_prev, stop_cache)
            state.action = 3
            predictions = agent.decode_all(state.global_latent)
            return agent.compute_losses(
                state, predictions, next_obs, g_prev, 0.8, 0.0, 0.0,
                actor_enabled=True, stop_cache=stop_cache,
            ).total

        build(cache)

        def f(store):
            cache.rewind()
            return build(cache)

        assert finite_diff_check(f, agent.store, h=1e-5) < 1e-4


class TestPredictionCost:
    def test_zero_for_exact(self):
        v = np.arange(8.0)
        assert prediction_cost(v, v) == 0.0

    def test_hand_value(self):
        assert prediction_cost(np.zeros(8), np.full(8, 2.0)) == 4.0
