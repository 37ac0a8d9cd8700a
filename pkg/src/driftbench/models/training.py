"""Data selection, early-stopped mini-batch training and scoring."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from ..data import BatchPlan, Dataset, FeatureView, make_batches
from ..errors import DegenerateClassError, NotTrainable
from ..evaluation import UndefinedMetric, recall_at_fpr
from ..scheduler import SplitView, TrainingView
from ..seeding import derive_seed
from .nets import MLP, Encoder, LogisticRegression, bce_with_logits, sigmoid

log = logging.getLogger(__name__)

Selection = Literal["source_only", "target_only", "all_labeled", "external"]
SELECTIONS = ("source_only", "target_only", "all_labeled", "external")
HOLDOUT_FRACTION_TENTHS = 3  # latest 30% of each domain's labeled rows


@dataclass(frozen=True)
class ModelSpec:
    family: Literal["logistic_regression", "mlp"] = "logistic_regression"
    hidden_sizes: tuple[int, ...] = (32,)
    learning_rate: float = 0.1
    max_epochs: int = 30
    patience: int = 3
    l2: float = 0.0
    batches_per_epoch: int | None = None

    def __post_init__(self):
        if self.family not in ("logistic_regression", "mlp"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))

    def build(self):
        if self.family == "mlp":
            return MLP(self.hidden_sizes, self.l2)
        return LogisticRegression(self.l2)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> ModelSpec:
        return cls(**dict(d or {}))

    def to_dict(self) -> dict[str, Any]:
        d = dict(vars(self))
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass(frozen=True)
class MethodSpec:
    name: str
    selection: Selection
    model: ModelSpec = field(default_factory=ModelSpec)
    batch_plan: BatchPlan = field(default_factory=BatchPlan)
    seed: int = 0
    command: tuple[str, ...] | None = None
    output_file: str = "scores.csv"
    options: Mapping[str, Any] = field(default_factory=dict)
    timeout: float | None = None

    def __post_init__(self):
        if self.selection not in SELECTIONS:
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.selection == "external" and not self.command:
            raise ValueError(f"external method {self.name!r} needs a command template")
        if self.command is not None:
            object.__setattr__(self, "command", tuple(self.command))


def participating_domains(selection: Selection, view: TrainingView) -> list[int]:
    domains = sorted(view.labeled)
    if selection == "source_only":
        return [d for d in domains if d != view.target_index]
    if selection == "target_only":
        return [view.target_index]
    return domains


def holdout_split(ds: Dataset) -> tuple[Dataset, Dataset]:
    """Earliest 70% of rows by event time for training, latest 30% held out."""
    order = np.lexsort((ds.row_id, ds.event_time))
    n = len(ds)
    n_hold = (HOLDOUT_FRACTION_TENTHS * n + 5) // 10  # round half up without float error
    return ds.take(order[: n - n_hold]), ds.take(order[n - n_hold :])


def select_training_data(
    view: TrainingView | SplitView, selection: Selection
) -> tuple[dict[int, Dataset], dict[int, Dataset]]:
    """Per-domain train and holdout sets for a data-selection mode.

    Raises :class:`NotTrainable` when the selected domains have no labels yet.
    """
    if isinstance(view, SplitView):
        view = view.training_view()
    domains = participating_domains(selection, view)
    if sum(len(view.labeled[d]) for d in domains) == 0:
        raise NotTrainable(f"{selection}: no labeled rows at step {view.step}")
    train, holdout = {}, {}
    for d in domains:
        if len(view.labeled[d]) == 0:
            continue
        train[d], holdout[d] = holdout_split(view.labeled[d])
    return train, holdout


@dataclass
class EarlyStopResult:
    params: Any
    best_epoch: int
    epochs_run: int
    trace: list[float]
    best_value: float


def early_stopping(
    params: Any,
    run_epoch: Callable[[Any, int], Any],
    evaluate: Callable[[Any], float],
    max_epochs: int,
    patience: int,
    higher_is_better: bool = True,
) -> EarlyStopResult:
    """Run epochs until ``patience`` consecutive epochs fail to improve the metric.

    Epochs are numbered from 1. Returns the parameters of the best epoch;
    only strict improvements replace the kept parameters.
    """
    sign = 1.0 if higher_is_better else -1.0
    best_params, best_value, best_epoch = params, -math.inf, 0
    trace: list[float] = []
    stale = 0
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        params = run_epoch(params, epoch)
        value = float(evaluate(params))
        trace.append(value)
        if sign * value > best_value:
            best_params, best_value, best_epoch = params, sign * value, epoch
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return EarlyStopResult(best_params, best_epoch, epoch, trace, sign * best_value)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    family: str
    spec: ModelSpec
    params: list[np.ndarray]
    encoder: Encoder
    metadata: dict[str, Any]

    def score(self, rows: Dataset | FeatureView) -> np.ndarray:
        return score(self, rows)


def _concat(parts: Sequence[Dataset]) -> tuple[Dataset, np.ndarray]:
    base = parts[0]
    merged = base.replace(
        numeric=np.concatenate([p.numeric for p in parts]),
        codes=np.concatenate([p.codes for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        event_time=np.concatenate([p.event_time for p in parts]),
        label_time=np.concatenate([p.label_time for p in parts]),
        row_id=np.concatenate([p.row_id for p in parts]),
    )
    domain_ids = np.concatenate([np.full(len(p), p.domain_id) for p in parts])
    return merged, domain_ids


def train(
    spec: MethodSpec,
    train_sets: Mapping[int, Dataset],
    holdout: Mapping[int, Dataset],
    seed: int,
    fpr_budget: float = 0.01,
) -> TrainedModel:
    """Fit the method's model on the union of ``train_sets``.

    After each epoch the model is scored on every domain's holdout; the
    stopping metric is recall at ``fpr_budget`` averaged over the domains
    where it is defined, falling back to holdout (or training) loss when it
    is defined nowhere.
    """
    parts = [train_sets[d] for d in sorted(train_sets) if len(train_sets[d])]
    if not parts:
        raise DegenerateClassError("no training rows")
    data, domain_ids = _concat(parts)
    y = data.labels.astype(np.float64)
    if y.min() == y.max():
        raise DegenerateClassError(f"training data has a single class ({int(y[0])})")

    encoder = Encoder.fit(data)
    X = encoder.transform(data)
    net = spec.model.build()
    gen = np.random.default_rng(derive_seed(seed, "init"))
    params = net.init_params(X.shape[1], gen)

    val_sets = []
    for d in sorted(holdout):
        h = holdout[d]
        if len(h):
            val_sets.append((d, encoder.transform(h), h.labels.astype(np.float64)))
    computable = [(d, Xh, yh) for d, Xh, yh in val_sets if 0 < yh.sum() < len(yh)]

    if computable:
        mode = "recall"

        def evaluate(p):
            values = []
            for _, Xh, yh in computable:
                try:
                    values.append(recall_at_fpr(net.logits(p, Xh), yh, fpr_budget))
                except UndefinedMetric:
                    continue
            return float(np.mean(values))

    elif val_sets:
        mode = "holdout_loss"
        Xv = np.concatenate([v[1] for v in val_sets])
        yv = np.concatenate([v[2] for v in val_sets])

        def evaluate(p):
            return bce_with_logits(net.logits(p, Xv), yv)

    else:
        mode = "train_loss"

        def evaluate(p):
            return bce_with_logits(net.logits(p, X), y)

    n_batches = spec.model.batches_per_epoch or max(1, math.ceil(len(y) / spec.batch_plan.batch_size))
    batches = make_batches(data.labels, spec.batch_plan, derive_seed(seed, "batches"))
    lr = spec.model.learning_rate

    def run_epoch(p, epoch):
        p = [a.copy() for a in p]
        for _ in range(n_batches):
            idx = next(batches)
            _, grads = net.loss_grad(p, X[idx], y[idx])
            for a, g in zip(p, grads):
                a -= lr * g
        return p

    result = early_stopping(
        params, run_epoch, evaluate, spec.model.max_epochs, spec.model.patience,
        higher_is_better=(mode == "recall"),
    )
    metadata = {
        "method": spec.name,
        "selection": spec.selection,
        "training_domains": sorted({int(d) for d in domain_ids}),
        "n_train": int(len(y)),
        "n_holdout": int(sum(len(v[2]) for v in val_sets)),
        "stopping_metric": mode,
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "validation_trace": result.trace,
    }
    log.debug("trained %s: %s", spec.name, metadata)
    return TrainedModel(net.family, spec.model, result.params, encoder, metadata)


def score(model: TrainedModel, rows: Dataset | FeatureView) -> np.ndarray:
    """Probability-like scores in [0, 1], aligned with the input rows."""
    X = model.encoder.transform(rows)
    net = model.spec.build()
    return sigmoid(net.logits(model.params, X))
