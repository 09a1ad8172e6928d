"""Pure-numpy dense-layer kernels (fallback backend).

Semantics are the contract for both backends: `dense_forward` computes
act(x @ w.T + b) and returns the post-activation array, which doubles as
the backward cache for every supported activation (relu mask and tanh
derivative are both recoverable from the output alone).
"""

import numpy as np

IDENTITY, RELU, TANH = 0, 1, 2

NAME = "numpy"


def dense_forward(x, w, b, act):
    """act(x @ w.T + b) for a single dense layer.

    Parameters
    ----------
    x : (n, d_in) float64, C-contiguous
    w : (d_out, d_in) float64
    b : (d_out,) float64
    act : int
        One of IDENTITY, RELU, TANH.
    """
    out = x @ w.T
    out += b
    if act == RELU:
        np.maximum(out, 0.0, out=out)
    elif act == TANH:
        np.tanh(out, out=out)
    return out


def dense_backward(dy, x, w, out, act, dw, db, need_dx):
    """Backward pass of dense_forward.

    Accumulates (+=) into dw/db when they are given; returns dx when
    need_dx, else None. `out` is the forward output (the activation cache).
    """
    if act == RELU:
        dpre = dy * (out > 0.0)
    elif act == TANH:
        dpre = dy * (1.0 - out * out)
    else:
        dpre = dy
    if dw is not None:
        dw += dpre.T @ x
        db += dpre.sum(axis=0)
    if need_dx:
        return dpre @ w
    return None
