"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``DRIFTBENCH_DISABLE_NUMBA`` is set to a truthy value. Both paths
return identical results; the choice only affects speed.
"""
from __future__ import annotations

import logging
import os

from . import _numpy

log = logging.getLogger(__name__)

_FALSY = {"", "0", "false", "no", "off"}


def _numba_disabled() -> bool:
    return os.environ.get("DRIFTBENCH_DISABLE_NUMBA", "").strip().lower() not in _FALSY


def _load_backend():
    if _numba_disabled():
        return _numpy, "numpy"
    try:
        from . import _numba
    except ImportError:
        log.debug("numba unavailable, falling back to numpy kernels")
        return _numpy, "numpy"
    return _numba, "numba"


_backend, BACKEND = _load_backend()

hash_uniform = _backend.hash_uniform
anchor_distances = _backend.anchor_distances
true_positives_within_budget = _backend.true_positives_within_budget

__all__ = [
    "BACKEND",
    "hash_uniform",
    "anchor_distances",
    "true_positives_within_budget",
]
