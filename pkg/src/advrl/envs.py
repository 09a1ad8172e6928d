"""In-repo environments: pendulum swing-up, a two-bridges crossing world
where observation noise should flip the preferred route, and a random
finite-MDP generator for the certification suite.

Environments never perturb observations themselves; attackers own all
perturbation. Transitions are deterministic given (seed, action sequence).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# ---------------------------------------------------------------------------
# Pendulum
# ---------------------------------------------------------------------------

PENDULUM_G = 10.0
PENDULUM_M = 1.0
PENDULUM_L = 1.0
PENDULUM_DT = 0.05
PENDULUM_TORQUE = 2.0
PENDULUM_MAX_SPEED = 8.0
PENDULUM_HORIZON = 200


def angle_normalize(x):
    return ((x + np.pi) % (2.0 * np.pi)) - np.pi


def pendulum_step(state, action):
    """One Euler step of the classic swing-up dynamics.

    state = (cos th, sin th, th_dot); action in [-1, 1] scales to torque
    u = 2*action. Reward is -(th^2 + 0.1 th_dot^2 + 0.001 u^2) at the
    pre-step state. Termination is horizon-only and applied by the
    wrapping environment, so done is always False here.
    """
    cos_th, sin_th, th_dot = float(state[0]), float(state[1]), float(state[2])
    th = np.arctan2(sin_th, cos_th)
    u = PENDULUM_TORQUE * float(np.clip(np.asarray(action).reshape(-1)[0], -1.0, 1.0))
    cost = angle_normalize(th) ** 2 + 0.1 * th_dot ** 2 + 0.001 * u ** 2
    acc = 3.0 * PENDULUM_G / (2.0 * PENDULUM_L) * np.sin(th) \
        + 3.0 / (PENDULUM_M * PENDULUM_L ** 2) * u
    new_th_dot = float(np.clip(th_dot + acc * PENDULUM_DT,
                               -PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED))
    new_th = th + new_th_dot * PENDULUM_DT
    nxt = np.array([np.cos(new_th), np.sin(new_th), new_th_dot])
    return nxt, -float(cost), False


class PendulumEnv:
    """Swing-up task; observation (cos th, sin th, th_dot), horizon 200."""

    dim_s = 3
    dim_a = 1
    horizon = PENDULUM_HORIZON

    def __init__(self):
        self._state = np.array([1.0, 0.0, 0.0])
        self._t = 0

    def reset(self, rng):
        th = rng.uniform(-np.pi, np.pi)
        th_dot = rng.uniform(-1.0, 1.0)
        self._state = np.array([np.cos(th), np.sin(th), th_dot])
        self._t = 0
        return self._state.copy()

    def step(self, action):
        nxt, r, _ = pendulum_step(self._state, action)
        self._state = nxt
        self._t += 1
        return nxt.copy(), r, self._t >= self.horizon


# ---------------------------------------------------------------------------
# Two bridges
# ---------------------------------------------------------------------------

TB_START = np.array([0.0, 0.0])
TB_GOAL = np.array([4.0, 0.0])
TB_NARROW_HALFWIDTH = 0.25
TB_WIDE_HALFWIDTH = 0.75
TB_DETOUR_Y = 2.0
TB_DT = 0.25
TB_HORIZON = 100
TB_FALL_PENALTY = -10.0
TB_GOAL_REWARD = 10.0
TB_STEP_COST = 0.01
TB_GOAL_RADIUS = 0.25
TB_BOUNDS_LO = np.array([-1.0, -3.0])
TB_BOUNDS_HI = np.array([5.0, 3.0])


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _on_bridge(pos):
    if abs(pos[1]) <= TB_NARROW_HALFWIDTH:
        return True
    for sgn in (1.0, -1.0):
        mid = np.array([2.0, sgn * TB_DETOUR_Y])
        if (_segment_distance(pos, TB_START, mid) <= TB_WIDE_HALFWIDTH
                or _segment_distance(pos, mid, TB_GOAL) <= TB_WIDE_HALFWIDTH):
            return True
    return False


def two_bridges_step(state, action):
    """One step of the crossing world.

    Action is a 2-D velocity clipped to the unit ball; position advances
    by dt * velocity and is clamped to the world box. The valley is the
    open strip 0 < x < 4: leaving both bridge corridors there falls
    (-10, terminal). Reaching within 0.25 of the goal pays +10 minus the
    per-step cost; every other step costs 0.01.
    """
    a = np.asarray(action, dtype=np.float64).reshape(2)
    speed = float(np.linalg.norm(a))
    if speed > 1.0:
        a = a / speed
    pos = np.clip(np.asarray(state, dtype=np.float64).reshape(2) + TB_DT * a,
                  TB_BOUNDS_LO, TB_BOUNDS_HI)
    if float(np.linalg.norm(pos - TB_GOAL)) <= TB_GOAL_RADIUS:
        return pos, TB_GOAL_REWARD - TB_STEP_COST, True
    if 0.0 < pos[0] < 4.0 and not _on_bridge(pos):
        return pos, TB_FALL_PENALTY, True
    return pos, -TB_STEP_COST, False


def _waypoint_return(waypoints):
    """Episodic return of a full-speed waypoint-following rollout."""
    pos = TB_START.copy()
    total = 0.0
    idx = 0
    for _ in range(TB_HORIZON):
        target = waypoints[idx]
        delta = target - pos
        if np.linalg.norm(delta) < 1e-9 and idx + 1 < len(waypoints):
            idx += 1
            target = waypoints[idx]
            delta = target - pos
        step_len = np.linalg.norm(delta)
        a = delta / max(step_len, TB_DT)
        pos, r, done = two_bridges_step(pos, a)
        if np.linalg.norm(pos - waypoints[idx]) < 1e-9 and idx + 1 < len(waypoints):
            idx += 1
        total += r
        if done:
            return total, True
    return total, False


class TwoBridgesEnv:
    """Cross a valley from (0,0) to (4,0) over a narrow straight bridge
    (halfwidth 0.25) or a wide detour via (2, +-2) (halfwidth 0.75).

    The narrow halfwidth sits just below the sigma=0.3 observation noise
    the route dilemma is built around: a perceived lateral error of one
    noise deviation walks off the narrow bridge but stays inside the wide
    corridor, while noise-free closed-loop control holds the narrow line
    comfortably.

    The narrow route's noise-free return strictly dominates the wide
    route's, which is asserted once at construction: the route dilemma
    only exists if taking the short risky bridge is worth more.
    """

    dim_s = 2
    dim_a = 2
    horizon = TB_HORIZON

    _geometry_checked = False

    def __init__(self):
        if not TwoBridgesEnv._geometry_checked:
            narrow, done_n = _waypoint_return([TB_GOAL])
            mid = np.array([2.0, TB_DETOUR_Y])
            wide, done_w = _waypoint_return([mid, TB_GOAL])
            if not (done_n and done_w and wide < narrow):
                raise ConfigError(
                    f"two-bridges geometry lost its dilemma: narrow={narrow} wide={wide}")
            TwoBridgesEnv._geometry_checked = True
        self._pos = TB_START.copy()
        self._t = 0

    def reset(self, rng):
        del rng  # deterministic start; exploration comes from the policy
        self._pos = TB_START.copy()
        self._t = 0
        return self._pos.copy()

    def step(self, action):
        pos, r, done = two_bridges_step(self._pos, action)
        self._pos = pos
        self._t += 1
        return pos.copy(), r, bool(done or self._t >= self.horizon)


# ---------------------------------------------------------------------------
# Random tabular MDPs
# ---------------------------------------------------------------------------


@dataclass
class TabularMDP:
    """Finite MDP with a perturbation prior kernel over states."""

    n_states: int
    n_actions: int
    P: np.ndarray          # (S, A, S) row-stochastic over the last axis
    R: np.ndarray          # (S, A)
    gamma: float
    perturb: np.ndarray    # (S, S) row-stochastic prior p(s~ | s)
    supports: list = field(default_factory=list)  # per-state support index arrays

    def validate(self):
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must lie in (0, 1)")
        if not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12):
            raise ConfigError("transition rows must sum to 1")
        if not np.allclose(self.perturb.sum(axis=1), 1.0, atol=1e-12):
            raise ConfigError("perturbation rows must sum to 1")
        return self


def _normalized_uniform_rows(rng, shape):
    u = rng.uniform(size=shape)
    return u / u.sum(axis=-1, keepdims=True)


def random_mdp(seed, n_states, n_actions, perturb_support_size, gamma=0.9):
    """Random MDP with rewards in [0,1] and a uniform perturbation prior
    over a random support of the given size that always contains the
    state itself."""
    if n_states < 2 or n_actions < 1:
        raise ConfigError("need n_states >= 2 and n_actions >= 1")
    if not (1 <= perturb_support_size <= n_states):
        raise ConfigError("perturb_support_size must be in [1, n_states]")
    rng = np.random.default_rng(seed)
    P = _normalized_uniform_rows(rng, (n_states, n_actions, n_states))
    R = rng.uniform(size=(n_states, n_actions))
    perturb = np.zeros((n_states, n_states))
    supports = []
    for s in range(n_states):
        others = np.delete(np.arange(n_states), s)
        extra = rng.permutation(others)[: perturb_support_size - 1]
        sup = np.sort(np.concatenate([[s], extra])).astype(np.intp)
        supports.append(sup)
        perturb[s, sup] = 1.0 / len(sup)
    return TabularMDP(n_states, n_actions, P, R, float(gamma), perturb, supports).validate()


# ---------------------------------------------------------------------------
# Factory
# ---------------------------------------------------------------------------


def make_env(env_id):
    """Build an environment from its string id.

    "pendulum", "two_bridges", or "tabular:<seed>:<S>:<A>:<K>".
    """
    if env_id == "pendulum":
        return PendulumEnv()
    if env_id == "two_bridges":
        return TwoBridgesEnv()
    if env_id.startswith("tabular:"):
        parts = env_id.split(":")
        if len(parts) != 5:
            raise ConfigError(f"bad tabular env id {env_id!r}")
        try:
            seed, s, a, k = (int(p) for p in parts[1:])
        except ValueError as e:
            raise ConfigError(f"bad tabular env id {env_id!r}") from e
        return random_mdp(seed, s, a, k)
    raise ConfigError(f"unknown env id {env_id!r}")
