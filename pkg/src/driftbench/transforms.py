"""Parameterized, time-dependent distribution shifts for tabular domains.

Four transformation kinds act on one feature each:

* ``rescale``: ``x * alpha ** tau(t)``
* ``anchor_blend``: ``(1 - gamma*tau(t)) * x + gamma*tau(t) * beta``
* ``categorical_resample``: with probability ``tau(t)`` redraw the category
  from a target marginal, otherwise keep it
* ``concept_flip``: where the gate feature exceeds a threshold, flip the
  label with probability ``flip_prob * tau(t)``

``tau`` maps an event time to a magnitude in [0, 1] (constant, linear drift
or seasonal sine). Timestamps are never modified.
"""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from .data import CATEGORICAL, NUMERICAL, Dataset
from .errors import DegenerateRangeError, SchemaError
from .sampler import DomainSet
from .seeding import row_uniforms

TauKind = Literal["constant", "linear", "sine"]
TransformKind = Literal["rescale", "anchor_blend", "categorical_resample", "concept_flip"]
KINDS = ("rescale", "anchor_blend", "categorical_resample", "concept_flip")


@dataclass(frozen=True)
class TauSchedule:
    kind: TauKind = "constant"
    period: float | None = None
    phase: float = 0.0
    t_min: float | None = None
    t_max: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "sine"):
            raise ValueError(f"unknown tau kind {self.kind!r}")
        if self.kind == "sine" and not (self.period and self.period > 0):
            raise ValueError("sine schedule needs a positive period")

    def bounded(self, t_min: float, t_max: float) -> TauSchedule:
        """Fill in the evaluation range unless one was given explicitly."""
        if self.t_min is not None and self.t_max is not None:
            return self
        return replace(
            self,
            t_min=t_min if self.t_min is None else self.t_min,
            t_max=t_max if self.t_max is None else self.t_max,
        )

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> TauSchedule:
        if not d:
            return cls()
        return cls(
            kind=d.get("kind", "constant"),
            period=d.get("period"),
            phase=d.get("phase", 0.0),
            t_min=d.get("t_min"),
            t_max=d.get("t_max"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in vars(self).items() if v is not None}


def tau_eval(schedule: TauSchedule, t):
    """Transformation magnitude at time ``t`` (scalar or array), always in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    if schedule.kind == "constant":
        out = np.ones_like(t)
    elif schedule.kind == "linear":
        if schedule.t_min is None or schedule.t_max is None:
            raise DegenerateRangeError("linear schedule has no evaluation range")
        span = schedule.t_max - schedule.t_min
        if not span > 0:
            raise DegenerateRangeError(f"linear schedule over empty range [{schedule.t_min}, {schedule.t_max}]")
        out = np.clip((t - schedule.t_min) / span, 0.0, 1.0)
    else:
        out = 0.5 * (1.0 + np.sin(2.0 * math.pi * t / schedule.period + schedule.phase))
        out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def apply_rescale(x, t, alpha: float, schedule: TauSchedule):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return np.asarray(x, dtype=np.float64) * np.power(alpha, tau_eval(schedule, t))


def apply_anchor_blend(x, t, beta: float, gamma: float, schedule: TauSchedule):
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    w = gamma * np.asarray(tau_eval(schedule, t))
    return (1.0 - w) * np.asarray(x, dtype=np.float64) + w * beta


def _check_marginal(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("target marginal must be a probability vector summing to 1")
    return p


def apply_categorical_resample(
    codes,
    t,
    target_marginal: Sequence[float],
    schedule: TauSchedule,
    rng: np.random.Generator | None = None,
    *,
    uniforms: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Keep each code with probability 1 - tau(t), else redraw it from ``target_marginal``.

    Randomness comes from ``rng`` or, when given, from two precomputed uniform
    arrays (keep/redraw decision, category draw).
    """
    p = _check_marginal(target_marginal)
    codes = np.asarray(codes, dtype=np.int64)
    if uniforms is None:
        if rng is None:
            raise ValueError("need rng or uniforms")
        u_keep, u_draw = rng.random(codes.shape), rng.random(codes.shape)
    else:
        u_keep, u_draw = uniforms
    tau = np.broadcast_to(tau_eval(schedule, t), codes.shape)
    redraw = u_keep < tau
    cdf = np.cumsum(p)
    drawn = np.minimum(np.searchsorted(cdf, u_draw, side="right"), len(p) - 1)
    return np.where(redraw, drawn, codes)


def apply_concept_flip(
    labels,
    gate_values,
    t,
    flip_prob: float,
    threshold: float,
    schedule: TauSchedule,
    rng: np.random.Generator | None = None,
    *,
    uniforms: np.ndarray | None = None,
) -> np.ndarray:
    """Flip labels of rows whose gate value exceeds ``threshold`` with probability ``flip_prob * tau(t)``."""
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError("flip_prob must lie in [0, 1]")
    labels = np.asarray(labels, dtype=np.int8)
    if uniforms is None:
        if rng is None:
            raise ValueError("need rng or uniforms")
        uniforms = rng.random(labels.shape)
    gate = np.asarray(gate_values, dtype=np.float64) > threshold
    flip = gate & (uniforms < flip_prob * np.asarray(tau_eval(schedule, t)))
    return np.where(flip, 1 - labels, labels).astype(np.int8)


@dataclass(frozen=True)
class TransformSpec:
    kind: TransformKind
    feature: str
    tau: TauSchedule = field(default_factory=TauSchedule)
    seed: int = 0
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    target_marginal: tuple[float, ...] | None = None
    flip_prob: float | None = None
    threshold: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        required = {
            "rescale": ("alpha",),
            "anchor_blend": ("beta", "gamma"),
            "categorical_resample": ("target_marginal",),
            "concept_flip": ("flip_prob",),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} on {self.feature!r} is missing {missing}")
        if self.kind == "rescale" and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind == "anchor_blend" and not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.kind == "categorical_resample":
            object.__setattr__(self, "target_marginal", tuple(_check_marginal(self.target_marginal)))
        if self.kind == "concept_flip" and not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")

    @property
    def required_kind(self) -> str:
        return CATEGORICAL if self.kind == "categorical_resample" else NUMERICAL

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "feature": self.feature, "tau": self.tau.to_dict(), "seed": self.seed}
        for name in ("alpha", "beta", "gamma", "flip_prob"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        if self.target_marginal is not None:
            d["target_marginal"] = list(self.target_marginal)
        if self.kind == "concept_flip":
            d["threshold"] = self.threshold
        return d


@dataclass(frozen=True)
class TransformPlan:
    """Ordered transformation specs per domain index."""

    specs: Mapping[int, Sequence[TransformSpec]] = field(default_factory=dict)

    def for_domain(self, d: int) -> Sequence[TransformSpec]:
        return self.specs.get(d, ())


def validate_plan(domains: DomainSet, plan: TransformPlan) -> None:
    for d, specs in plan.specs.items():
        if not 0 <= d < len(domains):
            raise SchemaError(f"plan references domain {d}, only {len(domains)} exist")
        schema = domains.domains[d].schema
        for spec in specs:
            try:
                feat = schema.feature(spec.feature)
            except SchemaError:
                raise SchemaError(f"domain {d}: unknown feature {spec.feature!r}") from None
            if feat.kind != spec.required_kind:
                raise SchemaError(
                    f"domain {d}, feature {spec.feature!r}: {spec.kind} needs a {spec.required_kind} feature, "
                    f"found {feat.kind}"
                )
            if spec.kind == "categorical_resample" and len(spec.target_marginal) != len(feat.vocabulary):
                raise SchemaError(
                    f"domain {d}, feature {spec.feature!r}: marginal has {len(spec.target_marginal)} entries, "
                    f"vocabulary has {len(feat.vocabulary)}"
                )


def _apply_one(ds: Dataset, spec: TransformSpec, step: int, t_min: float, t_max: float) -> Dataset:
    sched = spec.tau.bounded(t_min, t_max)
    t = ds.event_time
    j = ds.schema.column_index(spec.feature)
    key = (spec.seed, ds.domain_id, step, spec.kind, spec.feature)
    if spec.kind == "rescale":
        numeric = ds.numeric.copy()
        numeric[:, j] = apply_rescale(numeric[:, j], t, spec.alpha, sched)
        return ds.replace(numeric=numeric)
    if spec.kind == "anchor_blend":
        numeric = ds.numeric.copy()
        numeric[:, j] = apply_anchor_blend(numeric[:, j], t, spec.beta, spec.gamma, sched)
        return ds.replace(numeric=numeric)
    if spec.kind == "categorical_resample":
        codes = ds.codes.copy()
        u = (row_uniforms(ds.row_id, *key, "keep"), row_uniforms(ds.row_id, *key, "draw"))
        codes[:, j] = apply_categorical_resample(codes[:, j], t, spec.target_marginal, sched, uniforms=u)
        return ds.replace(codes=codes)
    labels = apply_concept_flip(
        ds.labels, ds.numeric[:, j], t, spec.flip_prob, spec.threshold, sched,
        uniforms=row_uniforms(ds.row_id, *key, "flip"),
    )
    return ds.replace(labels=labels)


def time_range(domains: DomainSet) -> tuple[float, float]:
    times = [d.event_time for d in domains.domains if len(d)]
    if not times:
        return 0.0, 0.0
    return float(min(t.min() for t in times)), float(max(t.max() for t in times))


def apply_plan(domains: DomainSet, plan: TransformPlan) -> DomainSet:
    """Transform every domain by its specs, in listed order.

    Linear schedules without an explicit range span the event times of all
    domains together, so equal times map to equal magnitudes everywhere.
    Random draws are keyed by (spec seed, domain, step, row id).
    """
    validate_plan(domains, plan)
    t_min, t_max = time_range(domains)
    out = []
    for d, ds in enumerate(domains.domains):
        for step, spec in enumerate(plan.for_domain(d)):
            ds = _apply_one(ds, spec, step, t_min, t_max)
        out.append(ds)
    return replace(domains, domains=out)
