"""Soft actor-critic on the in-repo reverse-mode core.

Twin critics with Polyak-averaged targets, a tanh-squashed diagonal
Gaussian actor, and an entropy temperature auto-tuned in log space. The
robust trainers reuse the same agent, optimizer steps, and critic fit;
only the target and actor-loss construction differ.
"""

import math

import numpy as np

from . import diffnet as dn
from .errors import ConfigError
from .replay import RunningNormalizer

DEFAULT_HIDDEN = (64, 64)
DEFAULT_LR = 3e-4
DEFAULT_GAMMA = 0.99
DEFAULT_TAU = 0.005
HUBER_DELTA = 1.0
CHECKPOINT_VERSION = 1


class SacAgent:
    """Networks plus optimizers; holds no environment or schedule state."""

    def __init__(self, dim_s, dim_a, hidden=DEFAULT_HIDDEN, lr=DEFAULT_LR,
                 alpha_init=0.2, target_entropy=None, policy_lr=None,
                 rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        if alpha_init <= 0.0:
            raise ConfigError("alpha_init must be positive")
        if policy_lr is None:
            policy_lr = lr
        self.dim_s = dim_s
        self.dim_a = dim_a
        acts = ["relu"] * len(hidden) + ["identity"]
        self.policy = dn.init_mlp([dim_s, *hidden, 2 * dim_a], acts, rng)
        self.q1 = dn.init_mlp([dim_s + dim_a, *hidden, 1], acts, rng)
        self.q2 = dn.init_mlp([dim_s + dim_a, *hidden, 1], acts, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.opt_policy = dn.Adam(self.policy.n_params, lr=policy_lr)
        self.opt_q1 = dn.Adam(self.q1.n_params, lr=lr)
        self.opt_q2 = dn.Adam(self.q2.n_params, lr=lr)
        self.log_alpha_ent = np.array([math.log(alpha_init)])
        self.opt_alpha = dn.Adam(1, lr=lr)
        self.target_entropy = -float(dim_a) if target_entropy is None else float(target_entropy)

    @property
    def alpha_ent(self):
        return float(np.exp(self.log_alpha_ent[0]))

    # -- plain (untaped) evaluation ------------------------------------------

    def policy_sample(self, s, noise):
        head = dn.policy_head(self.policy, s, self.dim_a)
        return dn.sample_squashed_gaussian(head, noise)

    def act(self, obs, rng=None):
        """Single-state action; mean action when rng is None."""
        obs = np.asarray(obs, dtype=np.float64)
        noise = np.zeros(self.dim_a) if rng is None else rng.standard_normal(self.dim_a)
        action, _ = self.policy_sample(obs, noise)
        return action

    def q_pair(self, s, a, nets=None):
        """Both critic values at (s, a) as (n,) arrays."""
        nets = nets or (self.q1, self.q2)
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
        return tuple(net.forward(x)[:, 0] for net in nets)

    def q_min(self, s, a, nets=None):
        q1, q2 = self.q_pair(s, a, nets)
        return np.minimum(q1, q2)

    def q_mean(self, s, a, nets=None):
        q1, q2 = self.q_pair(s, a, nets)
        return 0.5 * (q1 + q2)


def sac_critic_target(agent, r, s2, done, gamma, noise):
    """y = r + (1-done) * gamma * min_k (Q'_k(s', a') - alpha * log pi(a'|s'))
    with a' one reparameterized draw at s'. Taking the min over the
    per-critic entropy-adjusted values equals min-then-subtract here and
    matches how the robust targets combine their per-critic backups."""
    a2, logp2 = agent.policy_sample(s2, noise)
    q1t, q2t = agent.q_pair(s2, a2, nets=(agent.q1_target, agent.q2_target))
    alpha = agent.alpha_ent
    v = np.minimum(q1t - alpha * logp2, q2t - alpha * logp2)
    return r + (1.0 - done) * gamma * v


def fit_critics(agent, s, a, targets, weights=None):
    """One optimizer step of both critics toward fixed targets.

    targets is a list of (y, coeff) pairs; each critic minimizes
    mean_i w_i * sum_j coeff_j * huber(Q(s_i,a_i) - y_j_i). Returns the
    two loss values and the signed TD error of the mean critic against
    the coefficient-weighted target (the replay priority signal).
    """
    n = len(s)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
    tape = dn.GradientTape()
    tape.watch(agent.q1)
    tape.watch(agent.q2)
    losses = []
    q_vals = []
    for net in (agent.q1, agent.q2):
        q = dn.flatten_col(net.forward(x, tape=tape))
        q_vals.append(q.value.copy())
        per = None
        for y, coeff in targets:
            term = dn.mul(dn.huber(dn.sub(q, y), HUBER_DELTA), w * coeff)
            per = term if per is None else dn.add(per, term)
        losses.append(dn.mean_all(per))
    total = dn.add(losses[0], losses[1])
    tape.backward(total)
    agent.opt_q1.step(agent.q1.params, tape.grad(agent.q1))
    agent.opt_q2.step(agent.q2.params, tape.grad(agent.q2))
    y_mix = sum(coeff * y for y, coeff in targets)
    td = 0.5 * (q_vals[0] + q_vals[1]) - y_mix
    return float(losses[0].value), float(losses[1].value), td


def actor_terms(agent, s_true, s_tilde, noise, tape):
    """Per-transition actor terms: the policy acts on s_tilde, the
    critics score the action at s_true. Returns (L: Var (n,), logp values).
    Vanilla SAC is the s_tilde == s_true case."""
    s_tilde = np.ascontiguousarray(np.atleast_2d(s_tilde), dtype=np.float64)
    s_true = np.ascontiguousarray(np.atleast_2d(s_true), dtype=np.float64)
    head = dn.policy_head(agent.policy, s_tilde, agent.dim_a, tape=tape)
    a, logp = dn.sample_squashed_gaussian(head, noise)
    qs = [dn.flatten_col(net.forward(dn.concat_cols(s_true, a), tape=tape))
          for net in (agent.q1, agent.q2)]
    q_min = dn.minimum(qs[0], qs[1])
    per = dn.sub(dn.mul(logp, agent.alpha_ent), q_min)
    return per, logp.value


def sac_actor_loss(agent, s, noise, tape):
    """mean_i (alpha * log pi(a_i|s_i) - min_k Q_k(s_i, a_i)) with one
    reparameterized draw per state. Returns (loss, mean log-prob)."""
    per, logp = actor_terms(agent, s, s, noise, tape)
    return dn.mean_all(per), float(np.mean(logp))


def sac_actor_step(agent, s, rng):
    """Draw noise, step the policy, and return (loss, entropy estimate)."""
    noise = rng.standard_normal((len(np.atleast_2d(s)), agent.dim_a))
    tape = dn.GradientTape()
    tape.watch(agent.policy)
    loss, mean_logp = sac_actor_loss(agent, s, noise, tape)
    tape.backward(loss)
    agent.opt_policy.step(agent.policy.params, tape.grad(agent.policy))
    return float(loss.value), -mean_logp


def alpha_update(agent, h_current):
    """Adam step on log alpha for L(alpha) = -alpha*(H_target - H_current).

    d L / d log alpha = -alpha * (H_target - H_current), so the first
    bias-corrected step moves log alpha by exactly lr toward raising
    alpha when entropy is below target."""
    grad = -agent.alpha_ent * (agent.target_entropy - h_current)
    agent.opt_alpha.step(agent.log_alpha_ent, np.array([grad]))
    return agent.alpha_ent


def soft_update_targets(agent, tau):
    """Polyak average: target <- tau * online + (1 - tau) * target."""
    for net, tgt in ((agent.q1, agent.q1_target), (agent.q2, agent.q2_target)):
        tgt.params[:] = tau * net.params + (1.0 - tau) * tgt.params


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def to_checkpoint(agent, normalizer, step, run_config_digest):
    return {
        "version": CHECKPOINT_VERSION,
        "policy": agent.policy.to_json_dict(),
        "q1": agent.q1.to_json_dict(),
        "q2": agent.q2.to_json_dict(),
        "q1_target": agent.q1_target.to_json_dict(),
        "q2_target": agent.q2_target.to_json_dict(),
        "log_alpha_ent": float(agent.log_alpha_ent[0]),
        "normalizer": normalizer.to_json_dict(),
        "step": int(step),
        "run_config_digest": run_config_digest,
    }


def from_checkpoint(ckpt):
    """Rebuild (agent, normalizer, step, digest) from a checkpoint dict.

    Optimizer state is not checkpointed; restored agents are for
    evaluation and attack construction."""
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ConfigError("unsupported checkpoint version")
    policy = dn.ParamGraph.from_json_dict(ckpt["policy"])
    dim_s = policy.layer_dims[0]
    dim_a = policy.layer_dims[-1] // 2
    hidden = tuple(policy.layer_dims[1:-1])
    agent = SacAgent(dim_s, dim_a, hidden=hidden)
    agent.policy = policy
    agent.q1 = dn.ParamGraph.from_json_dict(ckpt["q1"])
    agent.q2 = dn.ParamGraph.from_json_dict(ckpt["q2"])
    agent.q1_target = dn.ParamGraph.from_json_dict(ckpt["q1_target"])
    agent.q2_target = dn.ParamGraph.from_json_dict(ckpt["q2_target"])
    agent.log_alpha_ent = np.array([float(ckpt["log_alpha_ent"])])
    normalizer = RunningNormalizer.from_json_dict(ckpt["normalizer"])
    return agent, normalizer, int(ckpt["step"]), ckpt["run_config_digest"]
