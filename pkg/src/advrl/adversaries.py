"""Observation attacks: prior samplers, soft-worst candidate selection,
projected-gradient critic attacks, the epsilon-worst mixture, and the
action-difference SGLD attack.

All attacks run in normalized observation space, perturb batches of
states at once, draw randomness only from the context's RNG stream, and
never mutate network parameters. Outputs are re-projected so that the
measured ||s~ - s||_inf <= eps holds exactly in float64.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import diffnet as dn
from .errors import ConfigError

HARD_MIN_ALPHA = 1e-6

ATTACK_KINDS = ("none", "gaussian", "uniform", "sofa", "epsa", "critic", "mad")

_FIELD_ALIASES = {
    "alpha": "alpha_attk",
    "n": "n_prior",
    "kappa": "kappa_worst",
    "eps": "eps",
    "sigma": "sigma",
    "pgd_steps": "pgd_steps",
    "step_size": "pgd_step_size",
    "random_start": "pgd_random_start",
    "sgld_steps": "sgld_steps",
    "sgld_step_size": "sgld_step_size",
    "noise_scale": "sgld_noise_scale",
}

_INT_FIELDS = {"n_prior", "pgd_steps", "sgld_steps"}
_BOOL_FIELDS = {"pgd_random_start"}


@dataclass(frozen=True)
class AdversarySpec:
    """One attack family plus its knobs; step sizes default on demand."""

    kind: str
    sigma: float = 0.3
    eps: float = 0.1
    alpha_attk: float = 4.0
    n_prior: int = 64
    kappa_worst: float = 0.8
    pgd_steps: int = 10
    pgd_step_size: float = None
    pgd_random_start: bool = True
    sgld_steps: int = 10
    sgld_step_size: float = None
    sgld_noise_scale: float = None
    label: str = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.kind == "sofa" and self.alpha_attk < 0.0:
            raise ConfigError("alpha_attk must be >= 0")
        if not (0.0 <= self.kappa_worst <= 1.0):
            raise ConfigError("kappa_worst must lie in [0, 1]")
        if self.eps < 0.0 or np.any(np.asarray(self.sigma) < 0.0):
            raise ConfigError("eps and sigma must be >= 0")
        if self.n_prior < 1:
            raise ConfigError("n_prior must be >= 1")
        if self.label is None:
            object.__setattr__(self, "label", self.kind)

    def pgd_step(self):
        if self.pgd_step_size is not None:
            return self.pgd_step_size
        return 2.0 * self.eps / max(self.pgd_steps, 1)

    def sgld_step(self):
        if self.sgld_step_size is not None:
            return self.sgld_step_size
        return 2.0 * self.eps / max(self.sgld_steps, 1)

    def sgld_noise(self):
        return self.sgld_noise_scale if self.sgld_noise_scale is not None \
            else 0.5 * self.sgld_step()


def parse_adversary(text):
    """Parse a CLI attack string like "sofa:alpha=4,n=64" or "none"."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    if kind not in ATTACK_KINDS:
        raise ConfigError(f"unknown attack kind {kind!r} in {text!r}")
    kwargs = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep or key not in _FIELD_ALIASES:
                raise ConfigError(f"bad attack parameter {item!r} in {text!r}")
            field = _FIELD_ALIASES[key]
            try:
                if field in _BOOL_FIELDS:
                    if val not in ("true", "false"):
                        raise ValueError(val)
                    kwargs[field] = val == "true"
                elif field in _INT_FIELDS:
                    kwargs[field] = int(val)
                else:
                    kwargs[field] = float(val)
            except ValueError as e:
                raise ConfigError(f"bad value for {key!r} in {text!r}") from e
    if kind == "none" and kwargs:
        raise ConfigError("attack 'none' takes no parameters")
    return AdversarySpec(kind=kind, label=text, **kwargs)


class AttackContext:
    """Read-only snapshot handed to attacks: policy, twin critics, the
    observation normalizer, and a dedicated RNG stream."""

    def __init__(self, policy, q1, q2, dim_a, rng, normalizer=None):
        self.policy = policy
        self.q1 = q1
        self.q2 = q2
        self.dim_a = dim_a
        self.rng = rng
        self.normalizer = normalizer

    @classmethod
    def from_agent(cls, agent, rng, normalizer=None):
        return cls(agent.policy, agent.q1, agent.q2, agent.dim_a, rng,
                   normalizer=normalizer)

    def policy_sample(self, s, noise):
        head = dn.policy_head(self.policy, s, self.dim_a)
        return dn.sample_squashed_gaussian(head, noise)

    def policy_mean(self, s):
        return np.tanh(dn.policy_head(self.policy, s, self.dim_a).mean)

    def q_mean(self, s, a):
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
        return 0.5 * (self.q1.forward(x)[:, 0] + self.q2.forward(x)[:, 0])


# ---------------------------------------------------------------------------
# Geometry helpers
# ---------------------------------------------------------------------------


def project_linf(x, s, eps):
    """Clamp x into the L-inf ball around s so that the recomputed
    difference (x_out - s) never exceeds eps, even after rounding."""
    out = np.clip(x, s - eps, s + eps)
    d = out - s
    over = np.abs(d) > eps
    while np.any(over):  # at most a couple of ulps of correction
        out = np.where(over, np.nextafter(out, np.broadcast_to(s, out.shape)), out)
        over = np.abs(out - s) > eps
    return out


def uniform_ball(s, eps, shape, rng):
    """Uniform draw in the L-inf ball; exact copy (no RNG use) at eps=0."""
    s = np.asarray(s, dtype=np.float64)
    if eps == 0.0:
        return np.broadcast_to(s, shape).copy()
    return project_linf(s + rng.uniform(-eps, eps, size=shape), s, eps)


def prior_sample(spec, s, n, rng):
    """n prior draws per state: Gaussian for gaussian/sofa kinds,
    uniform-ball otherwise. Input (d,) gives (n, d); (m, d) gives (m, n, d)."""
    s = np.asarray(s, dtype=np.float64)
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    m, d = s2.shape
    shape = (m, n, d)
    if spec.kind in ("gaussian", "sofa"):
        sigma = np.asarray(spec.sigma, dtype=np.float64)
        if np.all(sigma == 0.0):
            out = np.broadcast_to(s2[:, None, :], shape).copy()
        else:
            out = s2[:, None, :] + sigma * rng.standard_normal(shape)
    else:
        out = uniform_ball(s2[:, None, :], spec.eps, shape, rng)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Soft worst attack
# ---------------------------------------------------------------------------


def sofa_select_weights(q_tilde, alpha_attk):
    """softmax(-Q~/alpha) along the last axis."""
    return dn.softmax_weights(-np.asarray(q_tilde, dtype=np.float64) / alpha_attk)


def soft_select(q_tilde, alpha_attk, rng):
    """One index per row: argmin when alpha is at the hard-min threshold,
    otherwise a categorical draw from softmax(-Q~/alpha)."""
    q = np.atleast_2d(q_tilde)
    if alpha_attk <= HARD_MIN_ALPHA:
        return q.argmin(axis=1)
    w = sofa_select_weights(q, alpha_attk)
    u = rng.uniform(size=q.shape[0])
    cum = np.cumsum(w, axis=1)
    idx = (cum < u[:, None]).sum(axis=1)
    return np.minimum(idx, q.shape[1] - 1)


def sofa_attack(spec, s, ctx, return_info=False):
    """Draw N prior candidates, score each by the mean critic value of
    one policy action sampled at it (critic evaluated at the true state),
    and select with probability softmax(-Q~/alpha_attk)."""
    s = np.asarray(s, dtype=np.float64)
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    m, d = s2.shape
    n = spec.n_prior
    cands = prior_sample(spec, s2, n, ctx.rng)
    flat = np.ascontiguousarray(cands.reshape(m * n, d))
    noise = ctx.rng.standard_normal((m * n, ctx.dim_a))
    actions, _ = ctx.policy_sample(flat, noise)
    q = ctx.q_mean(np.repeat(s2, n, axis=0), actions).reshape(m, n)
    idx = soft_select(q, spec.alpha_attk, ctx.rng)
    out = cands[np.arange(m), idx]
    if single:
        out = out[0]
    if return_info:
        return out, {"candidates": cands, "q_tilde": q, "index": idx}
    return out


# ---------------------------------------------------------------------------
# Projected gradient descent
# ---------------------------------------------------------------------------


def pgd_minimize(objective, s, eps, steps, step_size, rng, random_start=True):
    """Raw-gradient PGD minimizing objective(x) over the L-inf ball.

    objective(x: (m,d)) -> (values (m,), gradients (m,d)). Returns the
    best iterate seen per row, evaluating steps+1 points. eps=0 or a
    degenerate (steps=0, no random start) setup returns s unchanged.
    """
    s = np.asarray(s, dtype=np.float64)
    if eps == 0.0:
        return s.copy()
    if random_start:
        x = uniform_ball(s, eps, s.shape, rng)
    else:
        x = s.copy()
    if steps == 0:
        return x
    best_x = x.copy()
    best_v = None
    for _ in range(steps):
        v, g = objective(x)
        if best_v is None:
            best_v, best_x = v.copy(), x.copy()
        else:
            better = v < best_v
            best_v = np.where(better, v, best_v)
            best_x[better] = x[better]
        x = project_linf(x - step_size * g, s, eps)
    v, _ = objective(x)
    better = v < best_v
    best_x[better] = x[better]
    return best_x


def _mean_q_of_policy_mean(policy, q_nets, dim_a, s_critic):
    """Objective closure: x -> (mean-critic value of the deterministic
    policy action at x, gradient w.r.t. x). The critics always see the
    anchor state s_critic, only the policy sees the perturbed state."""
    s_critic = np.ascontiguousarray(np.atleast_2d(s_critic), dtype=np.float64)
    ones = np.ones(s_critic.shape[0])

    def objective(x):
        tape = dn.GradientTape()
        xv = tape.watch_input(x)
        head = dn.policy_head(policy, xv, dim_a, tape=tape)
        a = dn.tanh(head.mean)
        qs = [dn.flatten_col(net.forward(dn.concat_cols(s_critic, a), tape=tape))
              for net in q_nets]
        q_mean = dn.mul(dn.add(qs[0], qs[1]), 0.5)
        tape.backward(dn.dot_const(q_mean, ones))
        return q_mean.value.copy(), xv.grad

    return objective


def worst_state_pgd(policy, q_nets, dim_a, s, eps, steps, step_size, rng,
                    random_start=True):
    """PGD worst observation around s: minimizes mean Q(s, tanh(mu(s~)))."""
    s2 = np.atleast_2d(np.asarray(s, dtype=np.float64))
    objective = _mean_q_of_policy_mean(policy, q_nets, dim_a, s2)
    out = pgd_minimize(objective, s2, eps, steps, step_size, rng, random_start)
    return out[0] if np.ndim(s) == 1 else out


def critic_attack_pgd(spec, s, ctx):
    """The critic attack: PGD against the mean of the online critics."""
    return worst_state_pgd(ctx.policy, (ctx.q1, ctx.q2), ctx.dim_a, s,
                           spec.eps, spec.pgd_steps, spec.pgd_step(),
                           ctx.rng, spec.pgd_random_start)


# ---------------------------------------------------------------------------
# Epsilon worst attack
# ---------------------------------------------------------------------------


def epsa_attack(spec, s, ctx):
    """With probability kappa_worst the PGD worst state, otherwise a
    uniform ball draw. kappa of exactly 0 or 1 skips the Bernoulli draw
    so the endpoints consume the same RNG stream as the pure attacks."""
    s = np.asarray(s, dtype=np.float64)
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    if spec.kappa_worst >= 1.0:
        out = critic_attack_pgd(spec, s2, ctx)
    elif spec.kappa_worst <= 0.0:
        out = uniform_ball(s2, spec.eps, s2.shape, ctx.rng)
    else:
        worst = ctx.rng.uniform(size=s2.shape[0]) < spec.kappa_worst
        out = np.empty_like(s2)
        if np.any(worst):
            out[worst] = critic_attack_pgd(spec, s2[worst], ctx)
        if np.any(~worst):
            out[~worst] = uniform_ball(s2[~worst], spec.eps,
                                       s2[~worst].shape, ctx.rng)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Action-difference SGLD attack
# ---------------------------------------------------------------------------


def gaussian_kl_pre_squash(head_ref, head_per):
    """Closed-form KL( N(mu1, s1) || N(mu2, s2) ) per row, pre-squash.

    Either side may be a constant array or a taped Var; gradients flow
    through whichever sides carry them."""
    mu1, ls1 = head_ref
    mu2, ls2 = head_per
    var1 = dn.exp(dn.mul(ls1, 2.0))
    d_ls = dn.sub(ls2, ls1)
    inv_var2 = dn.exp(dn.mul(ls2, -2.0))
    quad = dn.mul(dn.mul(dn.add(dn.square(dn.sub(mu2, mu1)), var1), inv_var2), 0.5)
    return dn.sum_rows(dn.sub(dn.add(d_ls, quad), 0.5))


def _kl_objective(policy, dim_a, s_ref):
    s_ref = np.ascontiguousarray(np.atleast_2d(s_ref), dtype=np.float64)
    ref = dn.policy_head(policy, s_ref, dim_a)
    ones = np.ones(s_ref.shape[0])

    def objective(x):
        tape = dn.GradientTape()
        xv = tape.watch_input(x)
        head = dn.policy_head(policy, xv, dim_a, tape=tape)
        kl = gaussian_kl_pre_squash((ref.mean, ref.log_std),
                                    (head.mean, head.log_std))
        tape.backward(dn.dot_const(kl, ones))
        return kl.value.copy(), xv.grad

    return objective


def mad_attack_sgld(spec, s, ctx):
    """SGLD ascent on the pre-squash Gaussian KL between the policy at
    the true and the perturbed state, projected onto the eps ball. The
    Langevin noise anneals linearly to zero over the iterations and the
    final iterate is returned."""
    s = np.asarray(s, dtype=np.float64)
    if spec.eps == 0.0:
        return s.copy()
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    objective = _kl_objective(ctx.policy, ctx.dim_a, s2)
    step = spec.sgld_step()
    noise0 = spec.sgld_noise()
    steps = spec.sgld_steps
    x = uniform_ball(s2, spec.eps, s2.shape, ctx.rng)
    for t in range(steps):
        _, g = objective(x)
        anneal = 1.0 - t / (steps - 1) if steps > 1 else 0.0
        z = ctx.rng.standard_normal(s2.shape)
        x = project_linf(x + step * g + noise0 * anneal * z, s2, spec.eps)
    return x[0] if single else x


def mad_kl_value(policy, dim_a, s_ref, s_per):
    """Plain KL evaluation (no tape) for diagnostics and tests."""
    obj = _kl_objective(policy, dim_a, np.atleast_2d(s_ref))
    vals, _ = obj(np.atleast_2d(np.asarray(s_per, dtype=np.float64)))
    return vals


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def apply_attack(spec, s, ctx):
    """Perturb observations according to the spec; pure w.r.t. the agent."""
    if spec.kind == "none":
        return np.asarray(s, dtype=np.float64).copy()
    if spec.kind == "gaussian":
        s_arr = np.asarray(s, dtype=np.float64)
        single = s_arr.ndim == 1
        out = prior_sample(spec, np.atleast_2d(s_arr), 1, ctx.rng)[:, 0, :]
        return out[0] if single else out
    if spec.kind == "uniform":
        s_arr = np.asarray(s, dtype=np.float64)
        return uniform_ball(s_arr, spec.eps, np.atleast_2d(s_arr).shape, ctx.rng).reshape(s_arr.shape)
    if spec.kind == "sofa":
        return sofa_attack(spec, s, ctx)
    if spec.kind == "epsa":
        return epsa_attack(spec, s, ctx)
    if spec.kind == "critic":
        return critic_attack_pgd(spec, s, ctx)
    if spec.kind == "mad":
        return mad_attack_sgld(spec, s, ctx)
    raise ConfigError(f"unknown attack kind {spec.kind!r}")


def with_params(spec, **kwargs):
    """Functional update preserving the label unless overridden."""
    return replace(spec, **kwargs)
