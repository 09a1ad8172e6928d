"""Robust soft actor-critic under observation attacks.

Subpackages: diffnet (dense nets + reverse mode), envs, replay, sac
(vanilla agent), adversaries (observation attacks), robust (robust
training losses), oracle (exact tabular certification), harness
(config/run/eval/CSV), cli.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
