"""Agent architecture: fast perceptual latent, damped global latent, policy.

Each step encodes the observation plus previous-action one-hot into a fast
latent, folds it into a slowly moving global latent through a gated
recurrent cell with damping, and feeds the concatenated state through a
policy head behind a stop-gradient. An action-conditioned decoder predicts
the next observation; its mixture under the detached policy distribution
drives the world-model loss, and the executed action's own prediction error
is the policy's internal cost signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Node, ParameterStore, StopCache
from .errors import ConfigError, NumericError

ACTOR_SIGNS = ("cost_penalizing", "paper_literal")


@dataclass
class AgentConfig:
    obs_dim: int = 8
    action_count: int = 5
    z_dim: int = 16
    g_dim: int = 12
    encoder_hidden: int = 32
    decoder_hidden: int = 32
    policy_hidden: int = 32
    damping: float = 0.1
    lambda_smooth: float = 0.25
    lambda_actor: float = 0.5
    lambda_entropy: float = 0.01
    actor_sign: str = "cost_penalizing"
    bptt_window: int = 1
    dtype: str = "float64"

    def __post_init__(self):
        dims = (
            self.obs_dim,
            self.action_count,
            self.z_dim,
            self.g_dim,
            self.encoder_hidden,
            self.decoder_hidden,
            self.policy_hidden,
        )
        if any(d < 1 for d in dims):
            raise ConfigError(f"all dimensions must be >= 1, got {dims}")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError(f"damping must be in (0, 1], got {self.damping}")
        if min(self.lambda_smooth, self.lambda_actor, self.lambda_entropy) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.actor_sign not in ACTOR_SIGNS:
            raise ConfigError(
                f"actor_sign must be one of {ACTOR_SIGNS}, got {self.actor_sign!r}"
            )
        if self.bptt_window != 1:
            raise ConfigError("only single-step truncation (bptt_window=1) is supported")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def state_dim(self) -> int:
        return self.z_dim + self.action_count + self.g_dim

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class AgentState:
    """Per-step forward bundle; latent entries are graph nodes."""

    obs: np.ndarray
    prev_action: np.ndarray
    fast: Node
    candidate: Node
    global_latent: Node
    policy_state: Node
    logits: Node
    probs: Node
    action: int | None = None


@dataclass
class LossBundle:
    pred: Node
    smooth: Node
    actor: Node
    entropy: Node
    total: Node
    cost: float
    baseline: float
    advantage: float


class PerspectiveAgent:
    """Owns the parameter store and builds the per-step computation graph."""

    def __init__(self, config: AgentConfig, init_rng: np.random.Generator):
        self.config = config
        self.store = ParameterStore(dtype=config.np_dtype)
        c = config
        gru_in = c.z_dim + c.action_count
        self._add_affine("enc.l1", c.encoder_hidden, c.obs_dim + c.action_count, init_rng)
        self._add_affine("enc.l2", c.z_dim, c.encoder_hidden, init_rng)
        for gate in ("reset", "update", "cand"):
            self._add_affine(f"gru.{gate}.in", c.g_dim, gru_in, init_rng)
            self._add_affine(f"gru.{gate}.rec", c.g_dim, c.g_dim, init_rng, bias=False)
        self._add_affine("dec.l1", c.decoder_hidden, c.g_dim + c.action_count, init_rng)
        self._add_affine("dec.l2", c.obs_dim, c.decoder_hidden, init_rng)
        self._add_affine("pol.l1", c.policy_hidden, c.state_dim, init_rng)
        self._add_affine("pol.l2", c.action_count, c.policy_hidden, init_rng)

    def _add_affine(self, name, out_dim, in_dim, rng, bias=True):
        bound = 1.0 / math.sqrt(in_dim)
        self.store.add(f"{name}.w", rng.uniform(-bound, bound, size=(out_dim, in_dim)))
        if bias:
            self.store.add(f"{name}.b", rng.uniform(-bound, bound, size=out_dim))

    def _zero_bias(self, name) -> Node:
        key = f"{name}.b"
        if key in self.store.params:
            return self.store[key]
        return dc.constant(np.zeros(self.store[f"{name}.w"].value.shape[0]))

    def _layer(self, name: str, x: Node) -> Node:
        return dc.affine(x, self.store[f"{name}.w"], self._zero_bias(name))

    def parameter_group(self, prefix: str) -> list[str]:
        return [n for n in self.store.names() if n.startswith(prefix)]

    # ------------------------------------------------------------------
    # forward components
    # ------------------------------------------------------------------

    def encode(self, obs: np.ndarray, prev_action: np.ndarray) -> Node:
        """Fast latent from observation and efference copy, tanh MLP."""
        if not np.all(np.isfinite(obs)):
            raise NumericError(f"non-finite observation: {obs}")
        x = dc.concat([dc.constant(obs), dc.constant(prev_action)])
        hidden = dc.tanh(self._layer("enc.l1", x))
        return dc.tanh(self._layer("enc.l2", hidden))

    def update_global(
        self,
        fast: Node,
        prev_action: np.ndarray,
        g_prev: np.ndarray,
        damping: float | None = None,
    ) -> tuple[Node, Node]:
        """Gated-recurrent candidate plus damped convex update of the global latent.

        The previous global latent enters as a constant: gradients never flow
        across step boundaries. `damping` overrides the configured coefficient
        (the degenerate 0 keeps the latent frozen).
        """
        d = self.config.damping if damping is None else float(damping)
        inp = dc.concat([fast, dc.constant(prev_action)])
        g_const = dc.constant(g_prev)
        r = dc.sigmoid(dc.add(self._layer("gru.reset.in", inp), self._layer("gru.reset.rec", g_const)))
        u = dc.sigmoid(dc.add(self._layer("gru.update.in", inp), self._layer("gru.update.rec", g_const)))
        n = dc.tanh(
            dc.add(
                self._layer("gru.cand.in", inp),
                dc.mul(r, self._layer("gru.cand.rec", g_const)),
            )
        )
        ones = dc.constant(np.ones(self.config.g_dim))
        candidate = dc.add(dc.mul(dc.sub(ones, u), n), dc.mul(u, g_const))
        g_new = dc.add(dc.scale(g_const, 1.0 - d), dc.scale(candidate, d))
        return candidate, g_new

    def policy_forward(
        self,
        fast: Node,
        prev_action: np.ndarray,
        global_latent: Node,
        stop_cache: StopCache | None = None,
    ) -> tuple[Node, Node, Node]:
        """Policy state, logits, and action distribution.

        Logits are computed from a stop-gradient copy of the state, so policy
        learning never reaches back into the encoder or recurrent weights.
        """
        state = dc.concat([fast, dc.constant(prev_action), global_latent])
        blocked = dc.stop_gradient(state, stop_cache)
        hidden = dc.tanh(self._layer("pol.l1", blocked))
        logits = self._layer("pol.l2", hidden)
        probs = dc.softmax(logits)
        return state, logits, probs

    def decode(self, global_latent: Node, action: int) -> Node:
        """Predicted next observation for one candidate action."""
        onehot = np.zeros(self.config.action_count)
        onehot[int(action)] = 1.0
        x = dc.concat([global_latent, dc.constant(onehot)])
        hidden = dc.tanh(self._layer("dec.l1", x))
        return self._layer("dec.l2", hidden)

    def decode_all(self, global_latent: Node) -> list[Node]:
        return [self.decode(global_latent, a) for a in range(self.config.action_count)]

    def forward(
        self,
        obs: np.ndarray,
        prev_action: np.ndarray,
        g_prev: np.ndarray,
        stop_cache: StopCache | None = None,
    ) -> AgentState:
        fast = self.encode(obs, prev_action)
        candidate, g_new = self.update_global(fast, prev_action, g_prev)
        state, logits, probs = self.policy_forward(fast, prev_action, g_new, stop_cache)
        return AgentState(
            obs=obs,
            prev_action=prev_action,
            fast=fast,
            candidate=candidate,
            global_latent=g_new,
            policy_state=state,
            logits=logits,
            probs=probs,
        )

    # ------------------------------------------------------------------
    # losses
    # ------------------------------------------------------------------

    def mixture_prediction(
        self,
        predictions: list[Node],
        probs: Node,
        stop_cache: StopCache | None = None,
    ) -> Node:
        """Prediction mixture under a detached copy of the action distribution."""
        weights = dc.stop_gradient(probs, stop_cache)
        return dc.weighted_sum(predictions, weights.value)

    def compute_losses(
        self,
        state: AgentState,
        predictions: list[Node],
        next_obs: np.ndarray,
        g_prev: np.ndarray,
        advantage: float,
        cost: float,
        baseline: float,
        actor_enabled: bool = True,
        stop_cache: StopCache | None = None,
    ) -> LossBundle:
        """All loss terms for one executed step.

        The advantage enters as a constant (score-function estimator), and the
        actor and entropy terms are excluded from the total while the actor is
        gated off, so their gradient contribution is exactly zero then.
        """
        if state.action is None:
            raise ConfigError("compute_losses requires the executed action on the state")
        c = self.config
        mixture = self.mixture_prediction(predictions, state.probs, stop_cache)
        pred = dc.mse(mixture, dc.constant(next_obs))
        smooth = dc.mse(state.global_latent, dc.stop_gradient(dc.constant(g_prev)))

        log_probs = dc.log_softmax(state.logits)
        log_pi_a = dc.pick(log_probs, state.action)
        sign = 1.0 if c.actor_sign == "cost_penalizing" else -1.0
        actor = dc.scale(log_pi_a, sign * float(advantage))
        entropy = dc.neg(dc.vsum(dc.mul(dc.exp(log_probs), log_probs)))

        total = dc.add(pred, dc.scale(smooth, c.lambda_smooth))
        if actor_enabled and c.lambda_actor > 0.0:
            total = dc.add(total, dc.scale(actor, c.lambda_actor))
        total = dc.sub(total, dc.scale(entropy, c.lambda_entropy))
        return LossBundle(
            pred=pred,
            smooth=smooth,
            actor=actor,
            entropy=entropy,
            total=total,
            cost=float(cost),
            baseline=float(baseline),
            advantage=float(advantage),
        )


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over the fixed action order."""
    r = rng.random()
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, r, side="right"), len(probs) - 1))


def prediction_cost(prediction: np.ndarray, next_obs: np.ndarray) -> float:
    """Mean squared error of the executed action's prediction."""
    diff = prediction - next_obs
    return float(np.mean(diff * diff))
