"""Recall at a fixed false-positive rate and the significance machinery
used to compare methods across repeated experiments.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import _kernels
from .errors import DriftBenchError, PairingError


class UndefinedMetric(DriftBenchError):
    """The metric needs both classes in the evaluation set."""


def fp_budget(fpr_budget: float, n_negatives: int) -> int:
    # rounding to 9 decimals absorbs float noise such as 0.29 * 100 = 28.999...
    return math.floor(round(fpr_budget * n_negatives, 9))


def recall_at_fpr(scores, labels, fpr_budget: float = 0.01) -> float:
    """Largest recall whose threshold admits at most ``floor(fpr_budget * #neg)`` false positives.

    Tied scores are never split: a tie group enters the prefix only if all of
    its negatives fit in the budget.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not 0.0 <= fpr_budget < 1.0:
        raise ValueError("fpr_budget must lie in [0, 1)")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric(f"need both classes (positives={n_pos}, negatives={n_neg})")
    order = np.argsort(-scores, kind="stable")
    tp = _kernels.true_positives_within_budget(scores[order], labels[order], fp_budget(fpr_budget, n_neg))
    return tp / n_pos


# -- Student t tail via the regularized incomplete beta function -------------
# Continued fraction (modified Lentz), converged to 1e-15 relative; the
# resulting p-values are accurate to about 1e-12 for moderate df.

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    t2 = t * t
    if t2 < df:
        # near t = 0, df / (df + t^2) rounds toward 1; use the complementary argument
        tail = 0.5 - 0.5 * betainc_regularized(0.5, 0.5 * df, t2 / (df + t2))
    else:
        tail = 0.5 * betainc_regularized(0.5 * df, 0.5, df / (df + t2))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of the paired t-test on ``a - b``.

    Differences that are all zero give 1.0; constant nonzero differences give 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise PairingError(f"cannot pair vectors of shapes {a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise PairingError("paired t-test needs at least two pairs")
    d = a - b
    if np.all(d == 0):
        return 1.0
    sd = float(np.std(d, ddof=1))
    mean = float(np.mean(d))
    if sd == 0.0:
        return 0.0
    t = mean / (sd / math.sqrt(n))
    return min(1.0, 2.0 * t_sf(abs(t), n - 1))


def bh_fdr(pvalues: Mapping[Any, float] | Iterable[tuple[Any, float]], q: float) -> set:
    """Benjamini-Hochberg step-up: keys rejected at false discovery rate ``q``."""
    items = list(pvalues.items()) if isinstance(pvalues, Mapping) else list(pvalues)
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    m = len(items)
    if m == 0:
        return set()
    ps = np.array([p for _, p in items], dtype=np.float64)
    if np.any((ps < 0) | (ps > 1)) or np.any(np.isnan(ps)):
        raise ValueError("p-values must lie in [0, 1]")
    sorted_p = np.sort(ps)
    passing = np.flatnonzero(sorted_p <= q * np.arange(1, m + 1) / m)
    if passing.size == 0:
        return set()
    cutoff = sorted_p[passing[-1]]
    # ties at the cutoff share its fate
    return {key for key, p in items if p <= cutoff}


def group_methods(
    mean_recalls: Mapping[str, float], significant: Mapping[tuple[str, str], bool]
) -> list[list[str]]:
    """Maximal runs of methods, ordered by mean recall, with no significant pair inside.

    ``significant`` is keyed by method pairs in either order; missing pairs
    count as not significant.
    """
    order = sorted(mean_recalls, key=lambda m: (-mean_recalls[m], m))

    def sig(x: str, y: str) -> bool:
        return bool(significant.get((x, y), significant.get((y, x), False)))

    groups: list[list[str]] = []
    last_end = -1
    for i in range(len(order)):
        j = i
        while j + 1 < len(order) and not any(sig(order[k], order[j + 1]) for k in range(i, j + 1)):
            j += 1
        if j > last_end:
            groups.append(order[i : j + 1])
            last_end = j
    return groups


@dataclass(frozen=True)
class EvalRecord:
    experiment_id: int
    method: str
    split: int
    status: str  # ok | unavailable | failed
    recall: float | None = None
    n_test: int = 0
    n_test_positives: int = 0
    diagnostic: str = ""

    @property
    def available(self) -> bool:
        return self.status == "ok" and self.recall is not None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PairResult:
    split: int
    method_a: str
    method_b: str
    n: int
    mean_difference: float
    p_value: float
    significant: bool = False


@dataclass
class StatReport:
    q: float
    family: str
    mean_recall: dict[int, dict[str, float]] = field(default_factory=dict)
    pairs: list[PairResult] = field(default_factory=list)
    groups: dict[int, list[list[str]]] = field(default_factory=dict)
    grouping_rule: str = (
        "maximal contiguous runs of methods ordered by mean recall in which no pair "
        "differs significantly (one reading of bracket diagrams; not uniquely defined)"
    )

    def to_dict(self) -> dict[str, Any]:
        return {
            "q": self.q,
            "family": self.family,
            "grouping_rule": self.grouping_rule,
            "splits": [
                {
                    "split": s,
                    "mean_recall": self.mean_recall[s],
                    "groups": self.groups.get(s, []),
                }
                for s in sorted(self.mean_recall)
            ],
            "pairs": [asdict(p) for p in self.pairs],
        }

    def table(self) -> str:
        """Plain-text significance table, one row per (split, method pair)."""
        lines = [f"{'split':>5}  {'method A':<16} {'method B':<16} {'n':>4} {'mean diff':>10} {'p':>10}  sig"]
        for p in self.pairs:
            lines.append(
                f"{p.split:>5}  {p.method_a:<16} {p.method_b:<16} {p.n:>4} {p.mean_difference:>10.4f} "
                f"{p.p_value:>10.3g}  {'*' if p.significant else ''}"
            )
        return "\n".join(lines)


def build_stat_report(
    records: Iterable[EvalRecord], q: float = 0.01, per_split_family: bool = False
) -> StatReport:
    """Paired tests for every method pair at every split, corrected with BH.

    By default all (pair, split) p-values form one family. Pairs with fewer
    than two shared experiments are reported as untested.
    """
    by_split: dict[int, dict[str, dict[int, float]]] = defaultdict(lambda: defaultdict(dict))
    for r in records:
        if r.available:
            by_split[r.split][r.method][r.experiment_id] = float(r.recall)

    report = StatReport(q=q, family="per_split" if per_split_family else "pooled")
    for s in sorted(by_split):
        methods = by_split[s]
        report.mean_recall[s] = {m: float(np.mean(list(v.values()))) for m, v in sorted(methods.items())}
        for a, b in itertools.combinations(sorted(methods), 2):
            shared = sorted(set(methods[a]) & set(methods[b]))
            if len(shared) < 2:
                continue
            va = [methods[a][e] for e in shared]
            vb = [methods[b][e] for e in shared]
            report.pairs.append(
                PairResult(s, a, b, len(shared), float(np.mean(np.subtract(va, vb))), paired_t_test(va, vb))
            )

    families: dict[Any, list[int]] = defaultdict(list)
    for i, p in enumerate(report.pairs):
        families[p.split if per_split_family else None].append(i)
    for members in families.values():
        rejected = bh_fdr([(i, report.pairs[i].p_value) for i in members], q)
        for i in rejected:
            report.pairs[i].significant = True

    for s, means in report.mean_recall.items():
        flags = {(p.method_a, p.method_b): p.significant for p in report.pairs if p.split == s}
        report.groups[s] = group_methods(means, flags)
    return report
