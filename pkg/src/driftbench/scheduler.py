"""Progressive arrival of data and labels over a retraining timeline.

At step ``a`` (1-based) with time ``t_a``:

* labeled rows of domain d: ``label_time <= t_a``
* unlabeled rows of domain d: ``event_time <= t_a < label_time``
* test rows: target-domain rows with ``t_a <= event_time < t_{a+1}``

Target rows with ``event_time == t_a`` are test rows at step ``a`` and are
left out of that step's labeled and unlabeled sets.

Source rows before ``t_alpha`` and target rows before ``t_beta`` are never
visible.
"""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureView
from .errors import ConfigError
from .sampler import DomainSet


@dataclass(frozen=True)
class ScheduleConfig:
    t_alpha: float
    t_beta: float
    t_gamma: float
    delta_t: float
    delta_l: float = 0.0

    def validate(self) -> None:
        if not self.t_alpha < self.t_beta < self.t_gamma:
            raise ConfigError(
                f"need t_alpha < t_beta < t_gamma, got {self.t_alpha}, {self.t_beta}, {self.t_gamma}"
            )
        if not self.delta_t > 0:
            raise ConfigError("delta_t must be positive")
        if self.delta_t > self.t_gamma - self.t_beta:
            raise ConfigError("delta_t exceeds t_gamma - t_beta; no test period fits")
        if self.delta_l < 0:
            raise ConfigError("delta_l must be nonnegative")

    def to_dict(self) -> dict[str, float]:
        return dict(vars(self))


def baf_schedule() -> ScheduleConfig:
    return ScheduleConfig(t_alpha=0, t_beta=3, t_gamma=8, delta_t=1, delta_l=1)


def acquirers_schedule(t_alpha: float) -> ScheduleConfig:
    return ScheduleConfig(
        t_alpha=t_alpha, t_beta=t_alpha + 16, t_gamma=t_alpha + 34, delta_t=2, delta_l=4
    )


@dataclass(frozen=True)
class Timeline:
    timestamps: tuple[float, ...]
    config: ScheduleConfig

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_splits(self) -> int:
        return len(self.timestamps) - 1


def build_timeline(config: ScheduleConfig) -> Timeline:
    """``t_1 = t_beta``, ``t_{a+1} = t_a + delta_t``, up to the last point <= ``t_gamma``."""
    config.validate()
    # t_a = t_beta + (a-1)*delta_t avoids accumulating rounding error
    n = int((config.t_gamma - config.t_beta) // config.delta_t)
    while config.t_beta + (n + 1) * config.delta_t <= config.t_gamma:
        n += 1
    while n > 0 and config.t_beta + n * config.delta_t > config.t_gamma:
        n -= 1
    stamps = tuple(float(config.t_beta + i * config.delta_t) for i in range(n + 1))
    if len(stamps) < 2:
        raise ConfigError("timeline has fewer than two timestamps")
    return Timeline(stamps, config)


@dataclass(frozen=True, eq=False)
class TrainingView:
    """Everything a method may see when trained at one step; no test labels."""

    step: int
    t_a: float
    target_index: int
    labeled: dict[int, Dataset]
    unlabeled: dict[int, FeatureView]
    test: FeatureView


@dataclass(frozen=True, eq=False)
class SplitView:
    step: int
    t_a: float
    t_next: float
    target_index: int
    labeled: dict[int, Dataset]
    unlabeled: dict[int, FeatureView]
    _test: Dataset

    @property
    def test_inputs(self) -> FeatureView:
        return self._test.features()

    @property
    def test_labels(self) -> np.ndarray:
        """Ground truth for evaluation only; training code receives :meth:`training_view`."""
        return self._test.labels

    @property
    def test_row_ids(self) -> np.ndarray:
        return self._test.row_id

    def training_view(self) -> TrainingView:
        return TrainingView(
            step=self.step,
            t_a=self.t_a,
            target_index=self.target_index,
            labeled=self.labeled,
            unlabeled=self.unlabeled,
            test=self.test_inputs,
        )


def admissible(domains: DomainSet, timeline: Timeline) -> list[Dataset]:
    """Each domain with rows before its availability start removed."""
    cfg = timeline.config
    out = []
    for d, ds in enumerate(domains.domains):
        start = cfg.t_beta if d == domains.target_index else cfg.t_alpha
        out.append(ds.take(ds.event_time >= start))
    return out


def _split(visible: list[Dataset], target_index: int, timeline: Timeline, a: int) -> SplitView:
    t_a, t_next = timeline.timestamps[a - 1], timeline.timestamps[a]
    labeled, unlabeled = {}, {}
    target = visible[target_index]
    for d, ds in enumerate(visible):
        if d == target_index:
            # rows with event_time == t_a belong to this step's test set, keep them out of training
            ds = ds.take(ds.event_time < t_a)
        labeled[d] = ds.take(ds.label_time <= t_a)
        unlabeled[d] = ds.take((ds.event_time <= t_a) & (t_a < ds.label_time)).features()
    test = target.take((target.event_time >= t_a) & (target.event_time < t_next))
    return SplitView(a, t_a, t_next, target_index, labeled, unlabeled, test)


def split_at(domains: DomainSet, timeline: Timeline, a: int) -> SplitView:
    if not 1 <= a <= timeline.n_splits:
        raise IndexError(f"step {a} outside [1, {timeline.n_splits}]")
    return _split(admissible(domains, timeline), domains.target_index, timeline, a)


def iterate_splits(domains: DomainSet, timeline: Timeline) -> Iterator[SplitView]:
    visible = admissible(domains, timeline)
    for a in range(1, timeline.n_splits + 1):
        yield _split(visible, domains.target_index, timeline, a)


def split_sizes(domains: DomainSet, timeline: Timeline) -> list[dict]:
    """Per-step set sizes, for auditing a schedule."""
    rows = []
    for view in iterate_splits(domains, timeline):
        row = {"step": view.step, "t_a": view.t_a, "t_next": view.t_next}
        for d in range(len(domains)):
            row[f"labeled_{d}"] = len(view.labeled[d])
            row[f"unlabeled_{d}"] = len(view.unlabeled[d])
        row["test"] = len(view.test_labels)
        row["test_positives"] = int(view.test_labels.sum())
        rows.append(row)
    return rows
