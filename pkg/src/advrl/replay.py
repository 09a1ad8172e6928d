"""Prioritized replay storage and online observation normalization.

The sum tree is array-backed with vectorized level descent for sampling
and batched delta propagation for priority updates; accumulated float
drift in the internal nodes is removed by a periodic full rebuild.
"""

import numpy as np

from .errors import ConfigError, UsageError

PRIORITY_EPS = 1e-6
DEFAULT_PER_ALPHA = 0.6
_REBUILD_EVERY = 4096


def _dedupe_last(indices, values):
    """Keep the last occurrence of each index so one batched write is
    equivalent to sequential writes."""
    rev = indices[::-1]
    _, first = np.unique(rev, return_index=True)
    keep = len(indices) - 1 - first
    return indices[keep], values[keep]


class SumTree:
    """Binary sum tree over `capacity` leaves (padded to a power of two)."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ConfigError("capacity must be positive")
        self.capacity = capacity
        self._n_leaves = 1
        while self._n_leaves < capacity:
            self._n_leaves *= 2
        # node 1 is the root; leaves live at [_n_leaves, 2*_n_leaves)
        self._tree = np.zeros(2 * self._n_leaves)
        self._writes_since_rebuild = 0

    @property
    def total(self):
        return float(self._tree[1])

    def leaf(self, index):
        return float(self._tree[self._n_leaves + index])

    def leaves(self, indices):
        return self._tree[self._n_leaves + np.asarray(indices, dtype=np.intp)]

    def set(self, indices, priorities):
        indices = np.asarray(indices, dtype=np.intp)
        priorities = np.asarray(priorities, dtype=np.float64)
        if indices.size == 0:
            return
        if indices.min() < 0 or indices.max() >= self.capacity:
            raise UsageError("leaf index out of range")
        if np.any(priorities < 0) or not np.all(np.isfinite(priorities)):
            raise UsageError("priorities must be finite and non-negative")
        indices, priorities = _dedupe_last(indices, priorities)
        node = indices + self._n_leaves
        delta = priorities - self._tree[node]
        self._tree[node] = priorities
        node = node // 2
        while node[0] >= 1:
            np.add.at(self._tree, node, delta)
            node = node // 2
        self._writes_since_rebuild += 1
        if self._writes_since_rebuild >= _REBUILD_EVERY:
            self.rebuild()

    def rebuild(self):
        t = self._tree
        size = self._n_leaves // 2
        while size >= 1:
            lo = size
            t[lo:2 * lo] = t[2 * lo:4 * lo:2] + t[2 * lo + 1:4 * lo:2]
            size //= 2
        self._writes_since_rebuild = 0

    def sample(self, n, rng):
        """Draw n leaf indices with probability proportional to priority."""
        if self.total <= 0.0:
            raise UsageError("cannot sample from an empty tree")
        u = rng.uniform(0.0, 1.0, size=n) * self._tree[1]
        u = np.minimum(u, np.nextafter(self._tree[1], 0.0))
        node = np.ones(n, dtype=np.intp)
        while node[0] < self._n_leaves:
            left = self._tree[2 * node]
            go_right = u >= left
            u = u - left * go_right
            node = 2 * node + go_right
        return node - self._n_leaves


class PerBuffer:
    """Ring-buffer replay with proportional prioritization.

    Leaf priority is (|td| + 1e-6)^alpha; fresh transitions enter at the
    running maximum raw priority so they are sampled at least once.
    Importance weights are (N * P)^-beta normalized by the batch max.
    """

    def __init__(self, capacity, dim_s, dim_a, alpha=DEFAULT_PER_ALPHA):
        if not (0.0 <= alpha <= 1.0):
            raise ConfigError("alpha must lie in [0, 1]")
        self.capacity = capacity
        self.alpha = alpha
        self._tree = SumTree(capacity)
        self._s = np.zeros((capacity, dim_s))
        self._a = np.zeros((capacity, dim_a))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, dim_s))
        self._done = np.zeros(capacity)
        self._next = 0
        self._size = 0
        self._max_raw = 1.0

    def __len__(self):
        return self._size

    def add(self, s, a, r, s2, done):
        i = self._next
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._s2[i] = s2
        self._done[i] = float(done)
        self._tree.set([i], [self._max_raw ** self.alpha])
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size, beta, rng):
        if self._size == 0:
            raise UsageError("buffer is empty")
        idx = self._tree.sample(batch_size, rng)
        probs = self._tree.leaves(idx) / self._tree.total
        weights = (self._size * probs) ** (-beta)
        weights = weights / weights.max()
        batch = {
            "s": self._s[idx],
            "a": self._a[idx],
            "r": self._r[idx],
            "s2": self._s2[idx],
            "done": self._done[idx],
        }
        return idx, batch, weights

    def update_priorities(self, indices, td_errors):
        raw = np.abs(np.asarray(td_errors, dtype=np.float64)) + PRIORITY_EPS
        self._max_raw = max(self._max_raw, float(raw.max()))
        self._tree.set(np.asarray(indices, dtype=np.intp), raw ** self.alpha)


class RunningNormalizer:
    """Welford/Chan online mean and variance over observation vectors.

    apply() is (x - mean) / max(std, 1e-8) once any data has been seen,
    identity before that. Updates must only ever see clean environment
    states; normalizing is part of the attack surface definition, so the
    statistics themselves must stay attack-free.
    """

    def __init__(self, dim):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, batch):
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.dim)
        n_b = batch.shape[0]
        if n_b == 0:
            return
        mean_b = batch.mean(axis=0)
        m2_b = ((batch - mean_b) ** 2).sum(axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = n_b, mean_b, m2_b
            return
        n_a = self.count
        delta = mean_b - self.mean
        tot = n_a + n_b
        self.mean = self.mean + delta * (n_b / tot)
        self.m2 = self.m2 + m2_b + delta ** 2 * (n_a * n_b / tot)
        self.count = tot

    @property
    def std(self):
        if self.count == 0:
            return np.ones(self.dim)
        return np.sqrt(self.m2 / self.count)

    def apply(self, x):
        if self.count == 0:
            return np.asarray(x, dtype=np.float64)
        return (np.asarray(x, dtype=np.float64) - self.mean) / np.maximum(self.std, 1e-8)

    def unapply(self, z):
        if self.count == 0:
            return np.asarray(z, dtype=np.float64)
        return np.asarray(z, dtype=np.float64) * np.maximum(self.std, 1e-8) + self.mean

    def to_json_dict(self):
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self.m2.tolist()}

    @classmethod
    def from_json_dict(cls, d):
        norm = cls(len(d["mean"]))
        norm.count = int(d["count"])
        norm.mean = np.asarray(d["mean"], dtype=np.float64)
        norm.m2 = np.asarray(d["m2"], dtype=np.float64)
        return norm


def beta_schedule(step, total_steps, beta_start=0.4, beta_end=1.0, anneal_end_frac=1.0):
    """Linear importance-weight exponent annealing from beta_start to
    beta_end, flat after anneal_end_frac of training."""
    end = max(int(anneal_end_frac * total_steps), 1)
    frac = min(max(step / end, 0.0), 1.0)
    return beta_start + (beta_end - beta_start) * frac
