"""Reference implementations of the hot kernels in vectorized numpy.

Each function here has a twin in ``_numba.py`` with an identical signature.
Results are bit-identical between the two paths.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_uniform(key: np.uint64, ids: np.ndarray) -> np.ndarray:
    """Counter-based uniforms in [0, 1): one per id, a pure function of (key, id)."""
    z = key + (ids.astype(np.uint64) + _ONE) * GOLDEN
    return (_mix64(z) >> _S11).astype(np.float64) * _INV53


def anchor_distances(
    numeric: np.ndarray,
    codes: np.ndarray,
    anchor_numeric: np.ndarray,
    anchor_codes: np.ndarray,
    inv_sigma: np.ndarray,
) -> np.ndarray:
    n = numeric.shape[0] if numeric.ndim == 2 else codes.shape[0]
    out = np.zeros(n, dtype=np.float64)
    # column-by-column accumulation keeps the summation order of the loop kernel
    for j in range(numeric.shape[1]):
        d = (numeric[:, j] - anchor_numeric[j]) * inv_sigma[j]
        out += d * d
    for j in range(codes.shape[1]):
        out += codes[:, j] != anchor_codes[j]
    return out


def true_positives_within_budget(
    sorted_scores: np.ndarray, sorted_labels: np.ndarray, max_fp: int
) -> int:
    """Positives above the lowest threshold whose false positives stay <= max_fp.

    Inputs are sorted by score, descending. A group of tied scores is taken
    whole or not at all.
    """
    n = sorted_scores.shape[0]
    if n == 0:
        return 0
    labels = sorted_labels.astype(np.int64)
    ends = np.flatnonzero(np.diff(sorted_scores) != 0)
    ends = np.append(ends, n - 1)
    cum_tp = np.cumsum(labels)[ends]
    cum_fp = (ends + 1) - cum_tp
    ok = np.flatnonzero(cum_fp <= max_fp)
    if ok.size == 0:
        return 0
    return int(cum_tp[ok[-1]])
