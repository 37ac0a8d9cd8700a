"""Stable seed derivation and per-row random streams.

Every random decision in the pipeline is keyed by a tuple of labels
(master seed, experiment index, component name, ...). Keys hash to 64-bit
integers with BLAKE2b, so results do not depend on execution order, worker
count, or Python's hash randomization.
"""
from __future__ import annotations

import hashlib

import numpy as np

from . import _kernels

MASK64 = (1 << 64) - 1


def derive_seed(*parts: object) -> int:
    """Hash an arbitrary tuple of ints/strings to a 64-bit seed."""
    text = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def rng(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def row_uniforms(row_ids: np.ndarray, *parts: object) -> np.ndarray:
    """One uniform in [0, 1) per row id, independent of row order.

    The value for a row depends only on ``parts`` and that row's id.
    """
    key = np.uint64(derive_seed(*parts) & MASK64)
    return _kernels.hash_uniform(key, np.asarray(row_ids, dtype=np.int64))
