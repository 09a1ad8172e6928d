"""Shared test oracles: finite differences and small net builders."""

import numpy as np

from advrl import diffnet as dn


def fd_grad(f, p0, h=1e-5):
    """Central finite differences of scalar f over all coordinates of p0."""
    p0 = np.asarray(p0, dtype=np.float64)
    g = np.zeros_like(p0)
    for i in range(p0.size):
        pp = p0.copy()
        pp[i] += h
        fp = f(pp)
        pp[i] -= 2 * h
        fm = f(pp)
        g[i] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


def smooth_mlp(dims, rng, scale=None):
    """Small tanh-activation MLP (smooth everywhere, safe for FD checks)."""
    acts = ["tanh"] * (len(dims) - 2) + ["identity"]
    net = dn.init_mlp(dims, acts, rng)
    if scale is not None:
        net.params *= scale
    return net


def const_net(dims, bias_out):
    """Zero-weight net whose output is always the final bias."""
    net = dn.ParamGraph(dims, ["relu"] * (len(dims) - 2) + ["identity"])
    net.bias(net.n_layers - 1)[:] = bias_out
    return net


def linear_net(w, b):
    """Single identity layer computing x @ w.T + b."""
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    net = dn.ParamGraph([w.shape[1], w.shape[0]], ["identity"])
    net.weight(0)[:] = w
    net.bias(0)[:] = b
    return net
