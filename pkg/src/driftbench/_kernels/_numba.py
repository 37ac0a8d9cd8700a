"""Loop kernels compiled with numba; twins of ``_numpy.py``."""
from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _hash_uniform(key, ids, out):
    for i in range(ids.shape[0]):
        z = key + (np.uint64(ids[i]) + np.uint64(1)) * _GOLDEN
        out[i] = np.float64(_mix64(z) >> np.uint64(11)) * _INV53


def hash_uniform(key: np.uint64, ids: np.ndarray) -> np.ndarray:
    out = np.empty(ids.shape[0], dtype=np.float64)
    _hash_uniform(np.uint64(key), np.ascontiguousarray(ids, dtype=np.int64), out)
    return out


@njit(cache=True)
def _anchor_distances(numeric, codes, anchor_numeric, anchor_codes, inv_sigma, out):
    n = out.shape[0]
    p = numeric.shape[1]
    c = codes.shape[1]
    for i in range(n):
        acc = 0.0
        for j in range(p):
            d = (numeric[i, j] - anchor_numeric[j]) * inv_sigma[j]
            acc += d * d
        for j in range(c):
            if codes[i, j] != anchor_codes[j]:
                acc += 1.0
        out[i] = acc


def anchor_distances(numeric, codes, anchor_numeric, anchor_codes, inv_sigma):
    n = numeric.shape[0] if numeric.ndim == 2 else codes.shape[0]
    out = np.empty(n, dtype=np.float64)
    _anchor_distances(
        np.ascontiguousarray(numeric, dtype=np.float64),
        np.ascontiguousarray(codes, dtype=np.int64),
        np.ascontiguousarray(anchor_numeric, dtype=np.float64),
        np.ascontiguousarray(anchor_codes, dtype=np.int64),
        np.ascontiguousarray(inv_sigma, dtype=np.float64),
        out,
    )
    return out


@njit(cache=True)
def _true_positives_within_budget(sorted_scores, sorted_labels, max_fp):
    n = sorted_scores.shape[0]
    tp = 0
    fp = 0
    i = 0
    while i < n:
        j = i
        gp = 0
        gn = 0
        while j < n and sorted_scores[j] == sorted_scores[i]:
            if sorted_labels[j] != 0:
                gp += 1
            else:
                gn += 1
            j += 1
        if fp + gn > max_fp:
            break
        tp += gp
        fp += gn
        i = j
    return tp


def true_positives_within_budget(sorted_scores, sorted_labels, max_fp):
    return int(
        _true_positives_within_budget(
            np.ascontiguousarray(sorted_scores, dtype=np.float64),
            np.ascontiguousarray(sorted_labels, dtype=np.int64),
            int(max_fp),
        )
    )
