"""Dense-kernel backend selection.

The compiled extension is preferred; the numpy implementation is a
drop-in fallback. `ADVRL_KERNEL` forces a backend: "auto" (default),
"cython", or "numpy".
"""

import os

from . import _numpy_backend

IDENTITY = _numpy_backend.IDENTITY
RELU = _numpy_backend.RELU
TANH = _numpy_backend.TANH

_choice = os.environ.get("ADVRL_KERNEL", "auto")
if _choice not in ("auto", "cython", "numpy"):
    raise RuntimeError(f"ADVRL_KERNEL must be auto|cython|numpy, got {_choice!r}")

if _choice == "numpy":
    _impl = _numpy_backend
else:
    try:
        from . import _dense as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _numpy_backend

BACKEND = _impl.NAME
dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward


def get_backend(name):
    """Return (dense_forward, dense_backward) for an explicit backend name."""
    if name == "numpy":
        return _numpy_backend.dense_forward, _numpy_backend.dense_backward
    if name == "cython":
        from . import _dense

        return _dense.dense_forward, _dense.dense_backward
    raise ValueError(f"unknown kernel backend {name!r}")
