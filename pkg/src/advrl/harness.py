"""Experiment harness: configs, seeding, training/eval loops, CSV artifacts.

Config files use a small line-oriented grammar (see README): `key = value`
pairs at the top level fill RunConfig fields, a `[algo_params]` table
collects algorithm-specific knobs, `#` starts a comment, and values are
parsed as JSON with a bare-string fallback.

Reproducibility contract: one master seed fans out to fixed named streams
(env, policy-init, replay, attack, policy, eval) through SeedSequence
splits, so the same config digest plus seed reproduces every artifact
byte for byte. Training CSVs log one row per finished episode; eval CSVs
log one row per (attack, episode). Every CSV carries its config digest in
a leading comment line and aggregate_stats refuses to pool rows whose
digests disagree within a (method, attack) cell.
"""

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversaries import AttackContext, apply_attack, parse_adversary
from .envs import make_env
from .errors import ConfigError, TrainingAborted, UsageError
from .replay import PerBuffer, RunningNormalizer, beta_schedule
from .robust import (EpsaSacConfig, SaSacConfig, SofaSacConfig,
                     epsa_actor_step, epsa_critic_targets, sa_sac_actor_step,
                     sofa_actor_step, sofa_critic_target)
from .sac import (SacAgent, alpha_update, fit_critics, from_checkpoint,
                  sac_actor_step, sac_critic_target, soft_update_targets,
                  to_checkpoint)

log = logging.getLogger("advrl.harness")

ALGOS = ("sac", "sofa_sac", "epsa_sac", "sa_sac")

TRAIN_COLUMNS = ("step", "episode", "return", "critic_loss", "actor_loss",
                 "alpha_ent", "alpha_attk", "kappa_worst", "eps")
EVAL_COLUMNS = ("seed", "step", "attack", "episode", "return")
STATS_COLUMNS = ("method", "attack", "n_seeds", "p25", "p50", "p75",
                 "whisker_lo", "whisker_hi", "outliers")

# Fixed stream ids; reordering these would silently change every run.
_STREAMS = {"env": 0, "policy-init": 1, "replay": 2, "attack": 3,
            "policy": 4, "eval": 5}
_EVAL_ENV_SUBSTREAM = 0
_EVAL_ATTACK_SUBSTREAM = 1

_thread_cap_applied = False
_thread_limit_hold = None


def _apply_thread_cap():
    """Honor ADVRL_THREADS by capping native BLAS/OpenMP pools."""
    global _thread_cap_applied, _thread_limit_hold
    if _thread_cap_applied:
        return
    _thread_cap_applied = True
    raw = os.environ.get("ADVRL_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(f"ADVRL_THREADS must be an integer, got {raw!r}") from e
    if n < 1:
        raise ConfigError("ADVRL_THREADS must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
        _thread_limit_hold = threadpool_limits(limits=n)
    except ImportError:  # pragma: no cover - threadpoolctl is a direct dep
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, str(n))


def rng_stream(master_seed, name, *extra):
    """Named counter-based split of the master seed.

    Extra integers select substreams (eval uses them per episode) without
    touching any sibling stream."""
    if name not in _STREAMS:
        raise ConfigError(f"unknown rng stream {name!r}")
    key = (int(master_seed), _STREAMS[name]) + tuple(int(x) for x in extra)
    return np.random.default_rng(np.random.SeedSequence(key))


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


def schedule_value(step, total_steps, start, end, hold_frac, anneal_end_frac):
    """Hold at `start` through hold_frac*total, anneal linearly to `end`
    by anneal_end_frac*total, hold at `end` after."""
    if total_steps < 1:
        raise ConfigError("total_steps must be >= 1")
    if not (0.0 <= hold_frac <= anneal_end_frac <= 1.0):
        raise ConfigError("need 0 <= hold_frac <= anneal_end_frac <= 1")
    frac = step / total_steps
    if frac <= hold_frac:
        return float(start)
    if frac >= anneal_end_frac:
        return float(end)
    span = anneal_end_frac - hold_frac
    return float(start + (end - start) * (frac - hold_frac) / span)


_SCHEDULE_KINDS = {
    "alpha_attk": {"start": 8.0, "end": 4.0, "hold_frac": 0.125, "anneal_end_frac": 0.9},
    "kappa_worst": {"start": 0.0, "end": 0.8, "hold_frac": 0.0, "anneal_end_frac": 0.9},
    "eps": {"start": 0.0, "end": 0.1, "hold_frac": 0.0, "anneal_end_frac": 0.9},
    "beta_per": {"start": 0.4, "end": 1.0, "hold_frac": 0.0, "anneal_end_frac": 1.0},
}


def schedule_eval(kind, step, total_steps, params=None):
    """Evaluate one of the named schedule families at a step; `params`
    overrides any of start/end/hold_frac/anneal_end_frac."""
    if kind not in _SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    p = dict(_SCHEDULE_KINDS[kind])
    for key, val in (params or {}).items():
        if key not in p:
            raise ConfigError(f"unknown schedule parameter {key!r}")
        p[key] = float(val)
    return schedule_value(step, total_steps, p["start"], p["end"],
                          p["hold_frac"], p["anneal_end_frac"])


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    env: str = "pendulum"
    algo: str = "sac"
    total_steps: int = 50_000
    eval_every: int = 10_000
    eval_episodes: int = 20
    seeds: tuple = (0,)
    attacks: tuple = ("none",)
    out_dir: str = "runs"
    hidden: tuple = (64, 64)
    lr: float = 3e-4
    policy_lr: float = None  # None: lr
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 128
    warmup_steps: int = 1000
    warmup_action_repeat: int = 1
    buffer_capacity: int = 200_000
    alpha_init: float = 0.2
    target_entropy: float = None  # None: -dim_a
    target_entropy_end: float = None  # None: constant target
    normalize_obs: bool = True
    per_alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    algo_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")
        self.seeds = tuple(int(s) for s in self.seeds)
        self.attacks = tuple(str(a) for a in self.attacks)
        self.hidden = tuple(int(h) for h in self.hidden)
        ints = {"total_steps": self.total_steps, "eval_every": self.eval_every,
                "eval_episodes": self.eval_episodes, "batch_size": self.batch_size,
                "buffer_capacity": self.buffer_capacity}
        for name, val in ints.items():
            if int(val) < 1:
                raise ConfigError(f"{name} must be >= 1")
        self.total_steps = int(self.total_steps)
        self.eval_every = int(self.eval_every)
        self.eval_episodes = int(self.eval_episodes)
        self.batch_size = int(self.batch_size)
        self.buffer_capacity = int(self.buffer_capacity)
        self.warmup_steps = int(self.warmup_steps)
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        self.warmup_action_repeat = int(self.warmup_action_repeat)
        if self.warmup_action_repeat < 1:
            raise ConfigError("warmup_action_repeat must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must lie in (0, 1)")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError("tau must lie in (0, 1]")
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if self.policy_lr is not None:
            self.policy_lr = float(self.policy_lr)
            if self.policy_lr <= 0.0:
                raise ConfigError("policy_lr must be positive")
        if self.target_entropy is not None:
            self.target_entropy = float(self.target_entropy)
            if not math.isfinite(self.target_entropy):
                raise ConfigError("target_entropy must be finite")
        if self.target_entropy_end is not None:
            self.target_entropy_end = float(self.target_entropy_end)
            if not math.isfinite(self.target_entropy_end):
                raise ConfigError("target_entropy_end must be finite")
        self.normalize_obs = bool(self.normalize_obs)
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden must be positive layer widths")
        for spec in self.attacks:
            parse_adversary(spec)
        algo_config(self)  # surface bad algo_params at load time

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["attacks"] = list(self.attacks)
        d["hidden"] = list(self.hidden)
        return d


def config_digest(cfg):
    """Digest of the canonical (sorted-key) JSON form; insensitive to the
    key order of the source file. out_dir is bookkeeping, not experiment
    identity, so relocating artifacts keeps the digest."""
    d = cfg.to_dict()
    d.pop("out_dir")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def algo_config(cfg):
    """Build the algorithm's own config object from cfg.algo_params."""
    params = dict(cfg.algo_params)
    if "percentile_clip" in params and params["percentile_clip"] is not None:
        params["percentile_clip"] = tuple(params["percentile_clip"])
    cls = {"sac": None, "sofa_sac": SofaSacConfig, "epsa_sac": EpsaSacConfig,
           "sa_sac": SaSacConfig}[cfg.algo]
    if cls is None:
        if params:
            raise ConfigError(f"algo 'sac' takes no algo_params, got {sorted(params)}")
        return None
    try:
        return cls(**params)
    except TypeError as e:
        raise ConfigError(f"bad algo_params for {cfg.algo}: {e}") from e


def parse_config_text(text):
    """Parse the key=value config grammar into a RunConfig."""
    top = {}
    tables = {}
    current = top
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name != "algo_params":
                raise ConfigError(f"line {lineno}: unknown table [{name}]")
            current = tables.setdefault(name, {})
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if current is top and key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = _parse_value(val.strip())
    if "algo_params" in top:
        raise ConfigError("algo_params must be a [algo_params] table")
    top.update(tables)
    return RunConfig(**top)


def _parse_value(text):
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        return text


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return repr(float(x))
    return str(x)


def _write_csv(path, columns, rows, meta):
    """Rows are sequences aligned with `columns`; meta lands in a leading
    `# k=v` comment line (keys and values must not contain spaces)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """Read one of our CSVs back as (meta dict, list of row dicts)."""
    path = Path(path)
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("#"):
            raise ConfigError(f"{path}: missing digest comment line")
        meta = {}
        for item in first[1:].split():
            k, sep, v = item.partition("=")
            if not sep:
                raise ConfigError(f"{path}: bad meta item {item!r}")
            meta[k] = v
        reader = csv.reader(f)
        header = next(reader)
        rows = [dict(zip(header, row)) for row in reader]
    return meta, rows


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainResult:
    run_dir: Path
    train_csv: Path
    checkpoints: tuple
    final_checkpoint: Path
    digest: str
    seed: int
    episodes: int


def run_dir_for(cfg, seed):
    tag = cfg.env.replace(":", "_")
    return Path(cfg.out_dir) / f"{cfg.algo}-{tag}-seed{seed}"


def _batch_digest(batch):
    h = hashlib.sha256()
    for key in ("s", "a", "r", "s2", "done"):
        h.update(np.ascontiguousarray(batch[key]).tobytes())
    return h.hexdigest()[:16]


def _schedules_at(cfg, acfg, step):
    alpha_attk = kappa = eps = 0.0
    if cfg.algo == "sofa_sac":
        alpha_attk = schedule_value(step, cfg.total_steps, acfg.alpha_attk_start,
                                    acfg.alpha_attk_end, acfg.hold_frac,
                                    acfg.anneal_end_frac)
    elif cfg.algo == "epsa_sac":
        eps = schedule_value(step, cfg.total_steps, 0.0, acfg.eps_final,
                             0.0, acfg.anneal_end_frac)
        kappa = schedule_value(step, cfg.total_steps, 0.0, acfg.kappa_final,
                               0.0, acfg.anneal_end_frac)
    elif cfg.algo == "sa_sac":
        eps = schedule_value(step, cfg.total_steps, 0.0, acfg.eps_final,
                             acfg.hold_frac, acfg.anneal_end_frac)
    return {"alpha_attk": alpha_attk, "kappa_worst": kappa, "eps": eps}


def _train_step(agent, buffer, normalizer, cfg, acfg, sched, step, rngs):
    """One gradient step; fixed stream order: replay sample, critic
    target (attack stream before policy stream), critic fit, actor step,
    temperature, Polyak. Returns (critic_loss, actor_loss, batch)."""
    beta = beta_schedule(step, cfg.total_steps, cfg.beta_start, cfg.beta_end)
    idx, batch, weights = buffer.sample(cfg.batch_size, beta, rngs["replay"])
    s = normalizer.apply(batch["s"])
    s2 = normalizer.apply(batch["s2"])
    a, r, done = batch["a"], batch["r"], batch["done"]
    m = len(s)
    if cfg.algo == "sofa_sac":
        y = sofa_critic_target(agent, r, s2, done, cfg.gamma,
                               sched["alpha_attk"], acfg.sigma, acfg.n_prior,
                               rngs["attack"], rngs["policy"],
                               percentile_clip=acfg.percentile_clip)
        targets = [(y, 1.0)]
    elif cfg.algo == "epsa_sac":
        targets = epsa_critic_targets(agent, r, s2, done, cfg.gamma,
                                      sched["eps"], sched["kappa_worst"],
                                      acfg, rngs["attack"], rngs["policy"])
    else:  # sac and sa_sac share the vanilla backup
        noise = rngs["policy"].standard_normal((m, agent.dim_a))
        targets = [(sac_critic_target(agent, r, s2, done, cfg.gamma, noise), 1.0)]
    l1, l2, td = fit_critics(agent, s, a, targets, weights)
    buffer.update_priorities(idx, td)
    if cfg.algo == "sofa_sac":
        actor_loss, h = sofa_actor_step(agent, s, acfg.sigma, acfg.n_prior,
                                        sched["alpha_attk"], rngs["attack"],
                                        rngs["policy"],
                                        use_importance_weight=acfg.use_importance_weight)
    elif cfg.algo == "epsa_sac":
        actor_loss, h = epsa_actor_step(agent, s, sched["eps"],
                                        sched["kappa_worst"], acfg,
                                        rngs["attack"], rngs["policy"])
    elif cfg.algo == "sa_sac":
        actor_loss, h = sa_sac_actor_step(agent, s, sched["eps"], acfg,
                                          rngs["attack"], rngs["policy"])
    else:
        actor_loss, h = sac_actor_step(agent, s, rngs["policy"])
    alpha_update(agent, h)
    soft_update_targets(agent, cfg.tau)
    critic_loss = 0.5 * (l1 + l2)
    if not (math.isfinite(critic_loss) and math.isfinite(actor_loss)
            and np.isfinite(td).all()):
        raise TrainingAborted(
            f"non-finite loss at step {step}",
            snapshot={"step": int(step), "batch_digest": _batch_digest(batch),
                      "critic_loss": [repr(float(l1)), repr(float(l2))],
                      "actor_loss": repr(float(actor_loss))})
    return critic_loss, actor_loss


def _write_ckpt(path, agent, normalizer, step, digest):
    path.write_text(json.dumps(to_checkpoint(agent, normalizer, step, digest),
                               sort_keys=True))
    return path


def run_train(cfg, seed):
    """Train one (config, seed) run; writes train.csv, config.json, and
    checkpoints at every eval_every multiple plus the end."""
    _apply_thread_cap()
    env = make_env(cfg.env)
    if not hasattr(env, "reset"):
        raise ConfigError(f"env {cfg.env!r} is not a rollout environment")
    digest = config_digest(cfg)
    acfg = algo_config(cfg)
    run_dir = run_dir_for(cfg, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps({"config": cfg.to_dict(), "digest": digest, "seed": int(seed)},
                   indent=2, sort_keys=True))
    rngs = {name: rng_stream(seed, name)
            for name in ("env", "policy-init", "replay", "attack", "policy")}
    agent = SacAgent(env.dim_s, env.dim_a, hidden=cfg.hidden, lr=cfg.lr,
                     alpha_init=cfg.alpha_init,
                     target_entropy=cfg.target_entropy,
                     policy_lr=cfg.policy_lr,
                     rng=rngs["policy-init"])
    normalizer = RunningNormalizer(env.dim_s)
    te_start = agent.target_entropy
    buffer = PerBuffer(cfg.buffer_capacity, env.dim_s, env.dim_a,
                       alpha=cfg.per_alpha)
    log.info("train %s %s seed=%d steps=%d -> %s",
             cfg.algo, cfg.env, seed, cfg.total_steps, run_dir)

    obs = env.reset(rngs["env"])
    if cfg.normalize_obs:
        normalizer.update(obs)
    episode = 0
    ep_return = 0.0
    ep_len = 0
    critic_loss = actor_loss = 0.0
    rows = []
    checkpoints = []
    warmup_action = None
    warmup_age = 0
    try:
        for step in range(1, cfg.total_steps + 1):
            if step <= cfg.warmup_steps:
                # held actions give persistent excitation on sparse tasks;
                # repeat=1 is one fresh uniform draw per step
                if warmup_action is None or warmup_age >= cfg.warmup_action_repeat:
                    warmup_action = rngs["policy"].uniform(-1.0, 1.0, env.dim_a)
                    warmup_age = 0
                action = warmup_action
                warmup_age += 1
            else:
                action = agent.act(normalizer.apply(obs), rngs["policy"])
            nxt, reward, done = env.step(action)
            ep_return += reward
            ep_len += 1
            # horizon exhaustion truncates the episode but is not a real
            # terminal, so the stored done flag must not cut the bootstrap
            stored_done = bool(done) and ep_len < env.horizon
            buffer.add(obs, action, reward, nxt, stored_done)
            if cfg.normalize_obs:
                normalizer.update(nxt)
            obs = nxt
            sched = _schedules_at(cfg, acfg, step)
            if step > cfg.warmup_steps:
                if cfg.target_entropy_end is not None:
                    # explore wide early, commit tight late: anneal the
                    # entropy target across the post-warmup phase
                    agent.target_entropy = schedule_value(
                        step, cfg.total_steps, te_start,
                        cfg.target_entropy_end,
                        cfg.warmup_steps / cfg.total_steps, 1.0)
                critic_loss, actor_loss = _train_step(
                    agent, buffer, normalizer, cfg, acfg, sched, step, rngs)
            if done:
                rows.append((step, episode, ep_return, critic_loss, actor_loss,
                             agent.alpha_ent, sched["alpha_attk"],
                             sched["kappa_worst"], sched["eps"]))
                episode += 1
                ep_return = 0.0
                ep_len = 0
                obs = env.reset(rngs["env"])
                if cfg.normalize_obs:
                    normalizer.update(obs)
                warmup_action = None
            if step % cfg.eval_every == 0:
                checkpoints.append(_write_ckpt(
                    run_dir / f"ckpt_step{step:08d}.json",
                    agent, normalizer, step, digest))
    except TrainingAborted as e:
        (run_dir / "abort.json").write_text(json.dumps(e.snapshot, indent=2,
                                                       sort_keys=True))
        raise
    train_csv = _write_csv(run_dir / "train.csv", TRAIN_COLUMNS, rows,
                           {"digest": digest, "algo": cfg.algo, "env": cfg.env,
                            "seed": int(seed)})
    final = _write_ckpt(run_dir / "ckpt_final.json", agent, normalizer,
                        cfg.total_steps, digest)
    return TrainResult(run_dir=run_dir, train_csv=train_csv,
                       checkpoints=tuple(checkpoints), final_checkpoint=final,
                       digest=digest, seed=int(seed), episodes=episode)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    step: int
    attack: str
    returns: tuple

    @property
    def mean(self):
        return float(np.mean(self.returns))

    def percentiles(self):
        p25, p50, p75 = np.percentile(self.returns, [25.0, 50.0, 75.0])
        return {25: float(p25), 50: float(p50), 75: float(p75)}

    def outliers(self):
        return box_stats(self.returns)["outliers"]


def box_stats(values):
    """Box-plot summary: quartiles by linear interpolation, whiskers at
    the most extreme values within 1.5*IQR of the quartiles, the rest
    flagged as outliers."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ConfigError("box_stats needs at least one value")
    p25, p50, p75 = np.percentile(vals, [25.0, 50.0, 75.0])
    iqr = p75 - p25
    lo_fence = p25 - 1.5 * iqr
    hi_fence = p75 + 1.5 * iqr
    inside = vals[(vals >= lo_fence) & (vals <= hi_fence)]
    if inside.size == 0:  # defensive; quartiles always pin interior points
        inside = vals
    outliers = sorted(float(v) for v in vals[(vals < lo_fence) | (vals > hi_fence)])
    return {"p25": float(p25), "p50": float(p50), "p75": float(p75),
            "whisker_lo": float(inside.min()), "whisker_hi": float(inside.max()),
            "outliers": outliers}


def _resolve_env_id(ckpt_path, env_id):
    if env_id is not None:
        return env_id
    sibling = Path(ckpt_path).parent / "config.json"
    if sibling.exists():
        return json.loads(sibling.read_text())["config"]["env"]
    raise ConfigError(
        "no env id: pass one explicitly or keep config.json beside the checkpoint")


def run_eval(ckpt_path, attacks, episodes, seed, env_id=None):
    """Evaluate a frozen checkpoint under each attack spec.

    The policy acts with its deterministic squashed mean; attacks see the
    normalized observation before the policy does; the environment always
    advances on the true state. Episode resets share one substream across
    attacks so different attacks face identical initial conditions."""
    _apply_thread_cap()
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    ckpt_path = Path(ckpt_path)
    raw = ckpt_path.read_bytes()
    agent, normalizer, step, digest = from_checkpoint(json.loads(raw))
    env = make_env(_resolve_env_id(ckpt_path, env_id))
    if not hasattr(env, "reset"):
        raise ConfigError("evaluation needs a rollout environment")
    if (env.dim_s, env.dim_a) != (agent.dim_s, agent.dim_a):
        raise ConfigError(
            f"checkpoint dims ({agent.dim_s}, {agent.dim_a}) do not match "
            f"env dims ({env.dim_s}, {env.dim_a})")
    specs = [parse_adversary(a) if isinstance(a, str) else a for a in attacks]
    records = []
    for spec in specs:
        returns = []
        for ep in range(episodes):
            rng_env = rng_stream(seed, "eval", _EVAL_ENV_SUBSTREAM, ep)
            rng_att = rng_stream(seed, "eval", _EVAL_ATTACK_SUBSTREAM, ep)
            ctx = AttackContext.from_agent(agent, rng_att, normalizer=normalizer)
            obs = env.reset(rng_env)
            total = 0.0
            done = False
            while not done:
                obs_adv = apply_attack(spec, normalizer.apply(obs), ctx)
                obs, reward, done = env.step(agent.act(obs_adv))
                total += reward
            returns.append(float(total))
        records.append(EvalRecord(seed=int(seed), step=int(step),
                                  attack=spec.label, returns=tuple(returns)))
    if ckpt_path.read_bytes() != raw:
        raise UsageError(f"evaluation must not mutate checkpoints: {ckpt_path}")
    return records


def write_eval_csv(path, records, digest, algo, env_id):
    rows = [(rec.seed, rec.step, rec.attack, ep, ret)
            for rec in records for ep, ret in enumerate(rec.returns)]
    return _write_csv(path, EVAL_COLUMNS, rows,
                      {"digest": digest, "algo": algo, "env": env_id})


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def aggregate_stats(eval_csv_paths, out_path):
    """Pool eval CSVs into one box-plot table with a row per
    (method, attack) cell over per-seed mean returns.

    Rows within a cell must share one config digest; different cells may
    come from different configs (that is the point of a comparison)."""
    if not eval_csv_paths:
        raise ConfigError("aggregate_stats needs at least one eval csv")
    cells = {}
    for path in eval_csv_paths:
        meta, rows = read_csv(path)
        for need in ("digest", "algo"):
            if need not in meta:
                raise ConfigError(f"{path}: meta lacks {need!r}")
        if not rows:
            raise ConfigError(f"{path}: no evaluation rows")
        for row in rows:
            key = (meta["algo"], row["attack"])
            cell = cells.setdefault(key, {"digest": meta["digest"], "by_seed": {}})
            if cell["digest"] != meta["digest"]:
                raise ConfigError(
                    f"mixed config digests in cell {key}: "
                    f"{cell['digest']} vs {meta['digest']}")
            cell["by_seed"].setdefault(int(row["seed"]), []).append(float(row["return"]))
    out_rows = []
    for (algo, attack) in sorted(cells):
        cell = cells[(algo, attack)]
        seed_means = [float(np.mean(cell["by_seed"][s]))
                      for s in sorted(cell["by_seed"])]
        stats = box_stats(seed_means)
        out_rows.append((algo, attack, len(seed_means), stats["p25"],
                         stats["p50"], stats["p75"], stats["whisker_lo"],
                         stats["whisker_hi"],
                         ";".join(repr(v) for v in stats["outliers"])))
    digests = sorted({cell["digest"] for cell in cells.values()})
    return _write_csv(out_path, STATS_COLUMNS, out_rows,
                      {"digest": "+".join(digests)})


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


def run_sweep(cfg):
    """Cross product of seeds and attacks: train any missing run, evaluate
    its final checkpoint under every attack, aggregate into stats.csv."""
    _apply_thread_cap()
    digest = config_digest(cfg)
    eval_paths = []
    for seed in cfg.seeds:
        run_dir = run_dir_for(cfg, seed)
        final = run_dir / "ckpt_final.json"
        if not final.exists():
            run_train(cfg, seed)
        else:
            existing = json.loads(final.read_text()).get("run_config_digest")
            if existing != digest:
                raise ConfigError(
                    f"{final} belongs to config {existing}, not {digest}; "
                    "point out_dir somewhere fresh")
        records = run_eval(final, cfg.attacks, cfg.eval_episodes, seed,
                           env_id=cfg.env)
        eval_paths.append(write_eval_csv(run_dir / "eval.csv", records,
                                         digest, cfg.algo, cfg.env))
        log.info("eval %s seed=%d done", cfg.algo, seed)
    stats = aggregate_stats(eval_paths, Path(cfg.out_dir) / "stats.csv")
    return {"stats_csv": stats, "eval_csvs": tuple(eval_paths),
            "digest": digest}


__all__ = [
    "ALGOS", "EVAL_COLUMNS", "STATS_COLUMNS", "TRAIN_COLUMNS",
    "EvalRecord", "RunConfig", "TrainResult",
    "aggregate_stats", "algo_config", "box_stats", "config_digest",
    "load_config", "parse_config_text", "read_csv", "rng_stream",
    "run_dir_for", "run_eval", "run_sweep", "run_train", "schedule_eval",
    "schedule_value", "write_eval_csv",
]
