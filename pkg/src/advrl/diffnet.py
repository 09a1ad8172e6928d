"""Minimal dense-network engine with exact reverse-mode gradients.

Everything the training losses need and nothing more: plain MLPs built
from fused dense kernels, a record/replay gradient tape over array-valued
nodes, tanh-squashed Gaussian sampling with its change-of-variables
log-density, numerically stable temperature log-sum-exp, and an Adam
optimizer. All arithmetic is float64 with a fixed summation order, so
results are bit-reproducible within one build.
"""

import json

import numpy as np

from . import _kernels as K
from .errors import ConfigError, UsageError

MIN_LOG_STD = -20.0
MAX_LOG_STD = 2.0

_LOG2 = float(np.log(2.0))
_LOG2PI = float(np.log(2.0 * np.pi))
_SQUASH_FLOOR = 1e-6
_LOG_SQUASH_FLOOR = float(np.log(_SQUASH_FLOOR))

_ACT_CODES = {"identity": K.IDENTITY, "relu": K.RELU, "tanh": K.TANH}


# ---------------------------------------------------------------------------
# Parameter graphs
# ---------------------------------------------------------------------------


class ParamGraph:
    """A dense MLP stored as one flat float64 parameter vector.

    Layer i maps dims[i] -> dims[i+1] through act(x @ W_i.T + b_i).
    Weight/bias views alias the flat vector, so optimizers can step the
    whole network with one array operation.
    """

    def __init__(self, layer_dims, activations, params=None):
        if len(activations) != len(layer_dims) - 1:
            raise ConfigError("need one activation per layer")
        for a in activations:
            if a not in _ACT_CODES:
                raise ConfigError(f"unknown activation {a!r}")
        self.layer_dims = [int(d) for d in layer_dims]
        if any(d <= 0 for d in self.layer_dims):
            raise ConfigError("layer dims must be positive")
        self.activations = list(activations)
        self._codes = [_ACT_CODES[a] for a in activations]
        self._slices = []
        off = 0
        for i in range(len(self.layer_dims) - 1):
            din, dout = self.layer_dims[i], self.layer_dims[i + 1]
            w = slice(off, off + dout * din)
            off += dout * din
            b = slice(off, off + dout)
            off += dout
            self._slices.append((w, b))
        self.n_params = off
        if params is None:
            params = np.zeros(off, dtype=np.float64)
        else:
            params = np.ascontiguousarray(params, dtype=np.float64)
            if params.shape != (off,):
                raise ConfigError("flat parameter vector has the wrong length")
        self.params = params

    @property
    def n_layers(self):
        return len(self._slices)

    def weight(self, i):
        w, _ = self._slices[i]
        din, dout = self.layer_dims[i], self.layer_dims[i + 1]
        return self.params[w].reshape(dout, din)

    def bias(self, i):
        _, b = self._slices[i]
        return self.params[b]

    def grad_views(self, flat_grad, i):
        w, b = self._slices[i]
        din, dout = self.layer_dims[i], self.layer_dims[i + 1]
        return flat_grad[w].reshape(dout, din), flat_grad[b]

    def copy(self):
        return ParamGraph(self.layer_dims, self.activations, self.params.copy())

    def load_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.params.shape:
            raise ConfigError("flat parameter vector has the wrong length")
        self.params[:] = flat

    # -- forward ------------------------------------------------------------

    def forward(self, x, tape=None):
        """Evaluate the network on a batch (rows) or a single vector.

        With a tape, returns a Var wired for reverse mode; without one,
        plain float64 arrays. 1-D inputs are promoted to a single row and
        squeezed back on return.
        """
        squeeze = False
        val = x.value if isinstance(x, Var) else x
        if np.ndim(val) == 1:
            if isinstance(x, Var):
                raise UsageError("taped inputs must be 2-D (rows)")
            val = val[None, :]
            x = val
            squeeze = True
        if val.shape[1] != self.layer_dims[0]:
            raise ConfigError(
                f"input width {val.shape[1]} != first layer dim {self.layer_dims[0]}"
            )
        if tape is None and not isinstance(x, Var):
            h = np.ascontiguousarray(val, dtype=np.float64)
            for i in range(self.n_layers):
                h = K.dense_forward(h, self.weight(i), self.bias(i), self._codes[i])
            return h[0] if squeeze else h
        if tape is None:
            raise UsageError("Var input requires the tape it was created under")
        h = x
        for i in range(self.n_layers):
            h = _dense_node(tape, self, i, h)
        return h

    # -- serialization ------------------------------------------------------

    def to_json_dict(self):
        return {
            "version": 1,
            "layer_dims": list(self.layer_dims),
            "activations": list(self.activations),
            "flat_params": [float(v) for v in self.params],
        }

    @classmethod
    def from_json_dict(cls, obj):
        if obj.get("version") != 1:
            raise ConfigError("unsupported parameter serialization version")
        return cls(obj["layer_dims"], obj["activations"], np.array(obj["flat_params"]))


def forward_mlp(net, x, tape=None):
    """Functional alias of ParamGraph.forward."""
    return net.forward(x, tape=tape)


def init_mlp(layer_dims, activations, rng):
    """Uniform fan-in initialization: W, b ~ U(-1/sqrt(d_in), 1/sqrt(d_in))."""
    net = ParamGraph(layer_dims, activations)
    for i in range(net.n_layers):
        bound = 1.0 / np.sqrt(net.layer_dims[i])
        w = net.weight(i)
        w[:] = rng.uniform(-bound, bound, size=w.shape)
        net.bias(i)[:] = rng.uniform(-bound, bound, size=net.layer_dims[i + 1])
    return net


# ---------------------------------------------------------------------------
# Gradient tape
# ---------------------------------------------------------------------------


class Var:
    """An array-valued node of a taped computation."""

    __slots__ = ("value", "grad", "needs_grad", "tape", "_backward")

    def __init__(self, value, needs_grad=False, tape=None):
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad
        self.tape = tape
        self._backward = None


def _accum(var, g):
    if not (isinstance(var, Var) and var.needs_grad):
        return
    var.grad = g if var.grad is None else var.grad + g


def _val(x):
    return x.value if isinstance(x, Var) else x


def _needs(x):
    return isinstance(x, Var) and x.needs_grad


class GradientTape:
    """Records primitive ops in creation order; replays them in reverse.

    Creation order is a valid topological order, so the backward sweep is
    a single reversed pass. Parameter gradients accumulate into one flat
    vector per watched network.
    """

    def __init__(self):
        self._nodes = []
        self._watched = []
        self._pgrads = {}
        self._consumed = False

    def watch(self, net):
        """Mark a ParamGraph's parameters as gradient targets."""
        if id(net) not in self._pgrads:
            self._watched.append(net)
            self._pgrads[id(net)] = np.zeros(net.n_params, dtype=np.float64)

    def is_watched(self, net):
        return id(net) in self._pgrads

    def watch_input(self, x):
        """Wrap an input array as a leaf whose gradient is wanted."""
        arr = np.ascontiguousarray(x, dtype=np.float64)
        return Var(arr, needs_grad=True, tape=self)

    def record(self, var):
        var.tape = self
        self._nodes.append(var)

    def backward(self, loss):
        """Run the reverse sweep from a scalar loss node."""
        if not isinstance(loss, Var) or loss.tape is not self:
            raise UsageError("loss was not produced under this tape")
        if self._consumed:
            raise UsageError("tape already consumed by a previous backward")
        if np.ndim(loss.value) != 0:
            raise UsageError("backward requires a scalar loss")
        self._consumed = True
        loss.grad = np.float64(1.0)
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)

    def grad(self, net):
        """Flat accumulated gradient for one watched network."""
        try:
            return self._pgrads[id(net)]
        except KeyError:
            raise UsageError("network was not watched by this tape") from None

    def param_grad_views(self, net, layer):
        return net.grad_views(self._pgrads[id(net)], layer)


def backward(tape, loss):
    """Reverse sweep returning the concatenated flat gradient of all
    watched networks, in the order they were watched."""
    tape.backward(loss)
    if not tape._watched:
        return np.zeros(0, dtype=np.float64)
    return np.concatenate([tape.grad(net) for net in tape._watched])


def _dense_node(tape, net, layer, x):
    xval = np.ascontiguousarray(_val(x), dtype=np.float64)
    code = net._codes[layer]
    out = K.dense_forward(xval, net.weight(layer), net.bias(layer), code)
    want_w = tape.is_watched(net)
    need_x = _needs(x)
    node = Var(out, needs_grad=want_w or need_x)
    if node.needs_grad:

        def _bk(g, net=net, layer=layer, x=x, xval=xval, out=out, code=code,
                want_w=want_w, need_x=need_x, tape=tape):
            dw = db = None
            if want_w:
                dw, db = tape.param_grad_views(net, layer)
            g = np.ascontiguousarray(g, dtype=np.float64)
            dx = K.dense_backward(g, xval, net.weight(layer), out, code, dw, db, need_x)
            if need_x:
                _accum(x, dx)

        node._backward = _bk
        tape.record(node)
    else:
        node.value = out
    return node


def _unary(x, value, dfn):
    if not _needs(x):
        return Var(value)
    node = Var(value, needs_grad=True)

    def _bk(g):
        _accum(x, dfn(g))

    node._backward = _bk
    x.tape.record(node)
    return node


def _binary(a, b, value, dfa, dfb):
    na, nb = _needs(a), _needs(b)
    if not (na or nb):
        return Var(value)
    node = Var(value, needs_grad=True)

    def _bk(g):
        if na:
            _accum(a, dfa(g))
        if nb:
            _accum(b, dfb(g))

    node._backward = _bk
    (a if na else b).tape.record(node)
    return node


# -- primitive ops ----------------------------------------------------------


def add(a, b):
    return _binary(a, b, _val(a) + _val(b), lambda g: g, lambda g: g)


def sub(a, b):
    return _binary(a, b, _val(a) - _val(b), lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def neg(a):
    return _unary(a, -_val(a), lambda g: -g)


def exp(a):
    out = np.exp(_val(a))
    return _unary(a, out, lambda g: g * out)


def tanh(a):
    out = np.tanh(_val(a))
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def square(a):
    av = _val(a)
    return _unary(a, av * av, lambda g: g * (2.0 * av))


def clip(a, lo, hi):
    av = _val(a)
    out = np.clip(av, lo, hi)
    mask = (av >= lo) & (av <= hi)
    return _unary(a, out, lambda g: g * mask)


def minimum(a, b):
    av, bv = _val(a), _val(b)
    mask = av <= bv
    return _binary(a, b, np.minimum(av, bv),
                   lambda g: g * mask, lambda g: g * ~mask)


def concat_cols(a, b):
    av, bv = _val(a), _val(b)
    na = av.shape[1]
    value = np.concatenate([av, bv], axis=1)
    return _binary(a, b, value,
                   lambda g: np.ascontiguousarray(g[:, :na]),
                   lambda g: np.ascontiguousarray(g[:, na:]))


def slice_cols(a, lo, hi):
    av = _val(a)
    out = np.ascontiguousarray(av[:, lo:hi])

    def dfn(g):
        full = np.zeros_like(av)
        full[:, lo:hi] = g
        return full

    return _unary(a, out, dfn)


def flatten_col(a):
    """(n, 1) -> (n,)"""
    av = _val(a)
    return _unary(a, av.reshape(-1), lambda g: g.reshape(av.shape))


def sum_rows(a):
    """(n, d) -> (n,): sum over axis 1."""
    av = _val(a)
    return _unary(a, av.sum(axis=1),
                  lambda g: np.broadcast_to(g[:, None], av.shape).copy())


def mean_all(a):
    av = _val(a)
    n = av.size
    return _unary(a, np.float64(av.mean()),
                  lambda g: np.full_like(av, g / n))


def dot_const(a, w):
    """Scalar <a, w> with a constant weight array."""
    av = _val(a)
    w = np.asarray(w, dtype=np.float64)
    return _unary(a, np.float64(float(np.dot(av, w))), lambda g: g * w)


def huber(a, delta=1.0):
    """Elementwise Huber penalty of a residual."""
    av = _val(a)
    absr = np.abs(av)
    out = np.where(absr <= delta, 0.5 * av * av, delta * (absr - 0.5 * delta))
    return _unary(a, out, lambda g: g * np.clip(av, -delta, delta))


# ---------------------------------------------------------------------------
# Gaussian policy heads
# ---------------------------------------------------------------------------


class GaussianPolicyHead:
    """Diagonal-Gaussian pre-squash parameters for a batch of states."""

    __slots__ = ("mean", "log_std")

    def __init__(self, mean, log_std):
        self.mean = mean
        self.log_std = log_std


def policy_head(net, x, dim_a, tape=None):
    """Split the policy net output into (mean, clamped log_std)."""
    out = net.forward(x, tape=tape)
    if tape is None and not isinstance(out, Var):
        mean = np.ascontiguousarray(out[..., :dim_a])
        log_std = np.clip(out[..., dim_a:], MIN_LOG_STD, MAX_LOG_STD)
        return GaussianPolicyHead(mean, log_std)
    mean = slice_cols(out, 0, dim_a)
    log_std = clip(slice_cols(out, dim_a, 2 * dim_a), MIN_LOG_STD, MAX_LOG_STD)
    return GaussianPolicyHead(mean, log_std)


def _squash_core(mean, log_std, z):
    std = np.exp(log_std)
    pre = mean + std * z
    action = np.tanh(pre)
    ax = np.abs(pre)
    # log(1 - tanh^2 x) == 2*(log 2 - |x| - softplus(-2|x|)), exact and stable
    log_sech2 = 2.0 * (_LOG2 - ax - np.log1p(np.exp(-2.0 * ax)))
    logdet = np.logaddexp(log_sech2, _LOG_SQUASH_FLOOR)
    logp = (-0.5 * z * z - log_std - 0.5 * _LOG2PI - logdet).sum(axis=-1)
    return std, action, log_sech2, logp


def sample_squashed_gaussian(head, noise):
    """Reparameterized draw: (tanh(mean + std*z), log-density at the draw).

    Taped when the head holds Vars (gradients flow to mean/log_std);
    plain float64 arrays otherwise. The log-density includes the tanh
    change-of-variables term with a 1e-6 floor inside its log.
    """
    taped = isinstance(head.mean, Var)
    mean, log_std = _val(head.mean), _val(head.log_std)
    z = np.asarray(noise, dtype=np.float64)
    std, action, log_sech2, logp = _squash_core(mean, log_std, z)
    if not taped:
        return action, logp

    mean_v, logstd_v = head.mean, head.log_std
    tape = mean_v.tape if _needs(mean_v) else logstd_v.tape
    needs = _needs(mean_v) or _needs(logstd_v)
    a_node = Var(action, needs_grad=needs)
    lp_node = Var(logp, needs_grad=needs)
    if not needs:
        return a_node, lp_node

    def _a_bk(g):
        dpre = g * (1.0 - action * action)
        _accum(mean_v, dpre)
        _accum(logstd_v, dpre * (std * z))

    def _lp_bk(g):
        s = np.exp(log_sech2)
        gdet = (-2.0 * action * s) / (s + _SQUASH_FLOOR)  # d logdet / d pre
        gcol = g[:, None] if np.ndim(g) else g
        _accum(mean_v, gcol * (-gdet))
        _accum(logstd_v, gcol * (-1.0 - gdet * (std * z)))

    a_node._backward = _a_bk
    lp_node._backward = _lp_bk
    tape.record(a_node)
    tape.record(lp_node)
    return a_node, lp_node


# ---------------------------------------------------------------------------
# Temperature log-sum-exp
# ---------------------------------------------------------------------------


def logsumexp(values, temperature, sign=-1, weights=None, axis=-1):
    """sign * T * log(sum_i w_i exp(sign * v_i / T)), max-subtracted.

    sign=-1 is the soft minimum -T*log(mean_i exp(-v_i/T)); sign=+1 the
    soft maximum. Weights default to uniform 1/N and must sum to 1 along
    the reduced axis for the soft-min/max reading.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0 or v.shape[axis] == 0:
        raise UsageError("logsumexp of an empty value set")
    if temperature <= 0.0:
        raise UsageError("temperature must be positive")
    if sign not in (-1, 1):
        raise UsageError("sign must be +1 or -1")
    u = (sign / temperature) * v
    m = u.max(axis=axis, keepdims=True)
    if weights is None:
        inner = np.exp(u - m).mean(axis=axis, keepdims=True)
    else:
        w = np.asarray(weights, dtype=np.float64)
        inner = (w * np.exp(u - m)).sum(axis=axis, keepdims=True)
    out = sign * temperature * (m + np.log(inner))
    return np.squeeze(out, axis=axis)


def softmin(values, temperature, weights=None, axis=-1):
    """Soft minimum: -T*log(sum w exp(-v/T)) with uniform default weights."""
    return logsumexp(values, temperature, sign=-1, weights=weights, axis=axis)


def softmax_weights(logits, axis=-1):
    """Stable softmax along an axis."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=axis, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


class Adam:
    """Adam with bias correction; steps a flat parameter vector in place."""

    def __init__(self, size, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size, dtype=np.float64)
        self.v = np.zeros(size, dtype=np.float64)

    def step(self, params, grad):
        self.t += 1
        self.m += (1.0 - self.beta1) * (grad - self.m)
        self.v += (1.0 - self.beta2) * (grad * grad - self.v)
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": self.m.tolist(), "v": self.v.tolist()}

    def load_state_dict(self, d):
        self.t = int(d["t"])
        self.m[:] = d["m"]
        self.v[:] = d["v"]


def serialize_params(net):
    """Decimal-shortest JSON string; round-trips parameters bit-exactly."""
    return json.dumps(net.to_json_dict())


def deserialize_params(text):
    return ParamGraph.from_json_dict(json.loads(text))
