"""Robust training losses and targets built on the SAC core.

Three trainers share the agent: a soft-worst variant whose critic
target soft-minimizes over prior-sampled perturbed next states and whose
actor re-weights per-perturbation losses by stop-gradient importance
weights; an epsilon-worst variant mixing a PGD worst perturbation with a
uniform one; and a consistency-regularized baseline penalizing the KL
between the policy at true and perturbed states.

Functions take schedule values (alpha_attk, eps, kappa) already
evaluated at the current step; the harness owns the schedules. All
perturbation randomness comes from the attack stream, action noise from
the policy stream, so zero-perturbation configs consume the policy
stream exactly like vanilla SAC.
"""

from dataclasses import dataclass

import numpy as np

from . import diffnet as dn
from .adversaries import gaussian_kl_pre_squash, uniform_ball, worst_state_pgd
from .errors import ConfigError
from .sac import actor_terms, alpha_update

# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SofaSacConfig:
    n_prior: int = 16
    sigma: float = 0.3
    alpha_attk_start: float = 8.0
    alpha_attk_end: float = 4.0
    hold_frac: float = 0.125
    anneal_end_frac: float = 0.9
    percentile_clip: tuple = None
    use_importance_weight: bool = True

    def __post_init__(self):
        if self.alpha_attk_start <= 0.0 or self.alpha_attk_end <= 0.0:
            raise ConfigError("alpha_attk schedule values must be positive")
        if self.n_prior < 1:
            raise ConfigError("n_prior must be >= 1")
        if self.percentile_clip is not None:
            lo, hi = self.percentile_clip
            if not (0.0 <= lo < hi <= 100.0):
                raise ConfigError("percentile_clip must satisfy 0 <= lo < hi <= 100")


@dataclass(frozen=True)
class EpsaSacConfig:
    eps_final: float = 0.1
    kappa_final: float = 0.8
    anneal_end_frac: float = 0.9
    pgd_steps: int = 5
    pgd_step_size: float = None
    pgd_random_start: bool = True

    def __post_init__(self):
        if not (0.0 <= self.kappa_final <= 1.0):
            raise ConfigError("kappa_final must lie in [0, 1]")
        if self.eps_final < 0.0:
            raise ConfigError("eps_final must be >= 0")

    def pgd_step(self, eps):
        if self.pgd_step_size is not None:
            return self.pgd_step_size
        return 2.0 * eps / max(self.pgd_steps, 1)


@dataclass(frozen=True)
class SaSacConfig:
    kappa_reg: float = 1.0
    eps_final: float = 0.1
    hold_frac: float = 0.125
    anneal_end_frac: float = 0.9
    sgld_steps: int = 5
    sgld_step_size: float = None
    sgld_noise_scale: float = None

    def __post_init__(self):
        if self.kappa_reg < 0.0:
            raise ConfigError("kappa_reg must be >= 0")
        if self.eps_final < 0.0:
            raise ConfigError("eps_final must be >= 0")

    def sgld_step(self, eps):
        if self.sgld_step_size is not None:
            return self.sgld_step_size
        return 2.0 * eps / max(self.sgld_steps, 1)

    def sgld_noise(self, eps):
        return self.sgld_noise_scale if self.sgld_noise_scale is not None \
            else 0.5 * self.sgld_step(eps)


# ---------------------------------------------------------------------------
# Soft-worst critic target
# ---------------------------------------------------------------------------


def sofa_critic_target_core(r, done, gamma, alpha_attk, v_per_critic,
                            percentile_clip=None):
    """Combine fixed per-critic sample values v (each (m, N)) into the
    soft-worst backup: per critic y_k = r + (1-done)*gamma*softmin_alpha(v_k),
    then the elementwise min across critics."""
    ys = []
    for v in v_per_critic:
        v = np.asarray(v, dtype=np.float64)
        if percentile_clip is not None:
            lo, hi = np.percentile(v, percentile_clip, axis=1, keepdims=True)
            v = np.clip(v, lo, hi)
        soft = dn.softmin(v, alpha_attk, axis=1)
        ys.append(r + (1.0 - done) * gamma * soft)
    out = ys[0]
    for y in ys[1:]:
        out = np.minimum(out, y)
    return out


def sofa_critic_target(agent, r, s2, done, gamma, alpha_attk, sigma, n,
                       rng_attack, rng_policy, percentile_clip=None):
    """Soft-worst backup: N Gaussian-prior perturbations of each next
    state, one policy action per perturbation, per-target-critic values
    v_j = Q'(s', a~_j) - alpha_ent*log pi(a~_j | s~_j) soft-minimized at
    temperature alpha_attk."""
    s2 = np.atleast_2d(s2)
    m, d = s2.shape
    cands = s2[:, None, :] + sigma * rng_attack.standard_normal((m, n, d))
    flat = np.ascontiguousarray(cands.reshape(m * n, d))
    noise = rng_policy.standard_normal((m * n, agent.dim_a))
    a, logp = agent.policy_sample(flat, noise)
    s2_rep = np.repeat(s2, n, axis=0)
    q1t, q2t = agent.q_pair(s2_rep, a, nets=(agent.q1_target, agent.q2_target))
    alpha_ent = agent.alpha_ent
    v1 = (q1t - alpha_ent * logp).reshape(m, n)
    v2 = (q2t - alpha_ent * logp).reshape(m, n)
    return sofa_critic_target_core(r, done, gamma, alpha_attk, (v1, v2),
                                   percentile_clip)


# ---------------------------------------------------------------------------
# Soft-worst actor loss
# ---------------------------------------------------------------------------


def sofa_actor_loss(agent, s, sigma, n, alpha_attk, tape, noise_state,
                    noise_a, noise_w, use_importance_weight=True,
                    weights_override=None):
    """Importance-weighted perturbed actor loss.

    noise_state: (m, N, d) standard normal for the prior draws;
    noise_a / noise_w: (m*N, dim_a) action noises for the loss draw and
    the independent stop-gradient weight draw. Returns (loss Var,
    h_current, weights (m, N))."""
    s2 = np.atleast_2d(s)
    m, d = s2.shape
    cands = s2[:, None, :] + sigma * np.asarray(noise_state)
    flat = np.ascontiguousarray(cands.reshape(m * n, d))
    s_rep = np.ascontiguousarray(np.repeat(s2, n, axis=0))
    alpha_ent = agent.alpha_ent

    if weights_override is not None:
        w = np.asarray(weights_override, dtype=np.float64)
    elif not use_importance_weight:
        w = np.full((m, n), 1.0 / n)
    else:
        a_w, logp_w = agent.policy_sample(flat, noise_w)
        q_w = agent.q_mean(s_rep, a_w)
        logits = (alpha_ent * logp_w - q_w).reshape(m, n) / alpha_attk
        w = dn.softmax_weights(logits)

    per, logp_vals = actor_terms(agent, s_rep, flat, noise_a, tape)
    loss = dn.dot_const(per, w.reshape(-1) / m)
    h_current = -float(np.mean(logp_vals))
    return loss, h_current, w


def sofa_actor_step(agent, s, sigma, n, alpha_attk, rng_attack, rng_policy,
                    use_importance_weight=True):
    """Draw all noises, take one policy Adam step, return (loss, h)."""
    s2 = np.atleast_2d(s)
    m, d = s2.shape
    noise_state = rng_attack.standard_normal((m, n, d))
    noise_a = rng_policy.standard_normal((m * n, agent.dim_a))
    noise_w = rng_policy.standard_normal((m * n, agent.dim_a)) \
        if use_importance_weight else None
    tape = dn.GradientTape()
    tape.watch(agent.policy)
    loss, h_current, _ = sofa_actor_loss(
        agent, s2, sigma, n, alpha_attk, tape, noise_state, noise_a, noise_w,
        use_importance_weight=use_importance_weight)
    tape.backward(loss)
    agent.opt_policy.step(agent.policy.params, tape.grad(agent.policy))
    return float(loss.value), h_current


# ---------------------------------------------------------------------------
# Epsilon-worst targets and losses
# ---------------------------------------------------------------------------


def perturbed_sac_target(agent, r, s2_true, s2_tilde, done, gamma, noise):
    """SAC backup where the policy sees s2_tilde and the target critics
    score the action at the true next state."""
    a2, logp2 = agent.policy_sample(s2_tilde, noise)
    q1t, q2t = agent.q_pair(s2_true, a2, nets=(agent.q1_target, agent.q2_target))
    alpha = agent.alpha_ent
    v = np.minimum(q1t - alpha * logp2, q2t - alpha * logp2)
    return r + (1.0 - done) * gamma * v


def epsa_critic_targets(agent, r, s2, done, gamma, eps, kappa, cfg,
                        rng_attack, rng_policy):
    """Two backups: y_star at the PGD worst next observation (objective
    = mean of the target critics at the policy mean) and y_r at a
    uniform-ball perturbation. Returns [(y, coeff)] with coefficients
    (kappa, 1-kappa); degenerate kappa skips the dead branch so the RNG
    stream matches the pure endpoint."""
    s2 = np.atleast_2d(s2)
    m = s2.shape[0]
    targets = []
    if kappa > 0.0:
        s_star = worst_state_pgd(agent.policy, (agent.q1_target, agent.q2_target),
                                 agent.dim_a, s2, eps, cfg.pgd_steps,
                                 cfg.pgd_step(eps), rng_attack,
                                 cfg.pgd_random_start)
        noise_star = rng_policy.standard_normal((m, agent.dim_a))
        y_star = perturbed_sac_target(agent, r, s2, s_star, done, gamma, noise_star)
        targets.append((y_star, kappa))
    if kappa < 1.0:
        s_r = uniform_ball(s2, eps, s2.shape, rng_attack)
        noise_r = rng_policy.standard_normal((m, agent.dim_a))
        y_r = perturbed_sac_target(agent, r, s2, s_r, done, gamma, noise_r)
        targets.append((y_r, 1.0 - kappa))
    return targets


def epsa_actor_loss(agent, s, eps, kappa, cfg, tape, rng_attack, rng_policy):
    """kappa-weighted mix of the actor loss at the PGD worst current
    observation (online critics drive the PGD) and at a uniform-ball
    one. Returns (loss Var, h_current)."""
    s2 = np.atleast_2d(s)
    m = s2.shape[0]
    star = rest = None
    logp_star = logp_r = None
    if kappa > 0.0:
        s_star = worst_state_pgd(agent.policy, (agent.q1, agent.q2),
                                 agent.dim_a, s2, eps, cfg.pgd_steps,
                                 cfg.pgd_step(eps), rng_attack,
                                 cfg.pgd_random_start)
        noise_star = rng_policy.standard_normal((m, agent.dim_a))
        star, logp_star = actor_terms(agent, s2, s_star, noise_star, tape)
    if kappa < 1.0:
        s_r = uniform_ball(s2, eps, s2.shape, rng_attack)
        noise_r = rng_policy.standard_normal((m, agent.dim_a))
        rest, logp_r = actor_terms(agent, s2, s_r, noise_r, tape)
    if star is None:
        loss = dn.mean_all(rest)
        h_current = -float(np.mean(logp_r))
    elif rest is None:
        loss = dn.mean_all(star)
        h_current = -float(np.mean(logp_star))
    else:
        loss = dn.mean_all(dn.add(dn.mul(star, kappa), dn.mul(rest, 1.0 - kappa)))
        h_current = -float(kappa * np.mean(logp_star)
                           + (1.0 - kappa) * np.mean(logp_r))
    return loss, h_current


def epsa_actor_step(agent, s, eps, kappa, cfg, rng_attack, rng_policy):
    tape = dn.GradientTape()
    tape.watch(agent.policy)
    loss, h_current = epsa_actor_loss(agent, s, eps, kappa, cfg, tape,
                                      rng_attack, rng_policy)
    tape.backward(loss)
    agent.opt_policy.step(agent.policy.params, tape.grad(agent.policy))
    return float(loss.value), h_current


# ---------------------------------------------------------------------------
# Consistency-regularized baseline
# ---------------------------------------------------------------------------


def sa_sac_actor_loss(agent, s, eps, cfg, tape, noise, rng_attack):
    """Vanilla actor loss plus kappa_reg * mean KL(pi(.|s) || pi(.|s~*))
    where s~* comes from SGLD ascent on the closed-form pre-squash KL.
    The KL term differentiates through both policy heads; the SGLD
    search itself is outside the gradient. Returns (loss, h_current)."""
    s2 = np.ascontiguousarray(np.atleast_2d(s), dtype=np.float64)
    per, logp_vals = actor_terms(agent, s2, s2, noise, tape)
    base = dn.mean_all(per)
    h_current = -float(np.mean(logp_vals))
    if cfg.kappa_reg == 0.0 or eps == 0.0:
        return base, h_current
    s_star = _sgld_max_kl(agent, s2, eps, cfg, rng_attack)
    head_ref = dn.policy_head(agent.policy, s2, agent.dim_a, tape=tape)
    head_per = dn.policy_head(agent.policy, s_star, agent.dim_a, tape=tape)
    kl = gaussian_kl_pre_squash((head_ref.mean, head_ref.log_std),
                                (head_per.mean, head_per.log_std))
    loss = dn.add(base, dn.mul(dn.mean_all(kl), cfg.kappa_reg))
    return loss, h_current


def _sgld_max_kl(agent, s2, eps, cfg, rng):
    """SGLD ascent of the pre-squash KL, annealed noise, last iterate."""
    from .adversaries import AdversarySpec, AttackContext, mad_attack_sgld

    spec = AdversarySpec(kind="mad", eps=eps, sgld_steps=cfg.sgld_steps,
                         sgld_step_size=cfg.sgld_step(eps),
                         sgld_noise_scale=cfg.sgld_noise(eps))
    ctx = AttackContext.from_agent(agent, rng)
    return mad_attack_sgld(spec, s2, ctx)


def sa_sac_actor_step(agent, s, eps, cfg, rng_attack, rng_policy):
    s2 = np.atleast_2d(s)
    noise = rng_policy.standard_normal((s2.shape[0], agent.dim_a))
    tape = dn.GradientTape()
    tape.watch(agent.policy)
    loss, h_current = sa_sac_actor_loss(agent, s2, eps, cfg, tape, noise, rng_attack)
    tape.backward(loss)
    agent.opt_policy.step(agent.policy.params, tape.grad(agent.policy))
    return float(loss.value), h_current


def robust_entropy_update(agent, h_current):
    """Temperature update fed by the perturbed-sample entropy estimate;
    the gradient rule is the vanilla one."""
    return alpha_update(agent, h_current)
