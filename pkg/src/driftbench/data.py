"""Tabular dataset model: schema, CSV ingestion, preprocessing, batching.

A :class:`Dataset` is columnar. Numerical features live in one float matrix,
categorical features in one integer-code matrix, and every row carries an
event time, a label time and a stable ``row_id`` that survives sampling,
sorting and transformation.
"""
from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .errors import (
    DegenerateClassError,
    EmptyInputError,
    ParseError,
    SchemaError,
    VocabularyError,
)

NUMERICAL = "numerical"
CATEGORICAL = "categorical"

DOMAIN_COLUMN = "__domain_id"
LABEL_TIME_COLUMN = "__label_time"
ROW_ID_COLUMN = "__row_id"


def format_float(x: float) -> str:
    """17 significant digits: enough to round-trip any float64 exactly."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Feature:
    name: str
    kind: Literal["numerical", "categorical"]
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == NUMERICAL and self.vocabulary:
            raise SchemaError(f"feature {self.name!r}: numerical features take no vocabulary")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise SchemaError(f"feature {self.name!r}: duplicate vocabulary entries")


@dataclass(frozen=True)
class Schema:
    features: tuple[Feature, ...]
    label_column: str
    event_time_column: str
    time_unit: str = ""
    # optional per-row label delay, overriding the dataset-wide constant
    label_delay_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        reserved = {self.label_column, self.event_time_column, self.label_delay_column}
        clash = reserved.intersection(names)
        if clash:
            raise SchemaError(f"columns listed as features: {sorted(c for c in clash if c)}")

    @property
    def numerical(self) -> list[Feature]:
        return [f for f in self.features if f.kind == NUMERICAL]

    @property
    def categorical(self) -> list[Feature]:
        return [f for f in self.features if f.kind == CATEGORICAL]

    @property
    def vocab_sizes(self) -> list[int]:
        return [len(f.vocabulary) for f in self.categorical]

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise SchemaError(f"unknown feature {name!r}")

    def column_index(self, name: str) -> int:
        """Index of ``name`` within its own kind's matrix."""
        kind = self.feature(name).kind
        group = self.numerical if kind == NUMERICAL else self.categorical
        return [f.name for f in group].index(name)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "features": [
                {"name": f.name, "kind": f.kind, **({"vocabulary": list(f.vocabulary)} if f.kind == CATEGORICAL else {})}
                for f in self.features
            ],
            "label_column": self.label_column,
            "event_time_column": self.event_time_column,
            "time_unit": self.time_unit,
        }
        if self.label_delay_column:
            out["label_delay_column"] = self.label_delay_column
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Schema:
        try:
            feats = tuple(
                Feature(f["name"], f["kind"], tuple(f.get("vocabulary", ()))) for f in d["features"]
            )
            return cls(
                features=feats,
                label_column=d["label_column"],
                event_time_column=d["event_time_column"],
                time_unit=d.get("time_unit", ""),
                label_delay_column=d.get("label_delay_column"),
            )
        except KeyError as e:
            raise SchemaError(f"schema is missing key {e.args[0]!r}") from None


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


@dataclass(frozen=True)
class Instance:
    numeric_values: tuple[float, ...]
    category_codes: tuple[int, ...]
    label: int
    event_time: float
    label_time: float


@dataclass(frozen=True)
class Standardization:
    """Per-feature mean and population std of the values before scaling."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        # zero-variance features keep scale 1 so they map to exactly 0
        return np.where(self.std > 0, self.std, 1.0)

    def apply(self, numeric: np.ndarray) -> np.ndarray:
        return (numeric - self.mean) / self.scale


def fit_standardization(numeric: np.ndarray) -> Standardization:
    if numeric.shape[0] == 0:
        raise EmptyInputError("cannot compute statistics of an empty dataset")
    mean = numeric.mean(axis=0)
    std = numeric.std(axis=0)  # population (1/N)
    return Standardization(mean=mean, std=std)


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable columnar dataset for one domain."""

    schema: Schema
    numeric: np.ndarray
    codes: np.ndarray
    labels: np.ndarray
    event_time: np.ndarray
    label_time: np.ndarray
    row_id: np.ndarray
    domain_id: int = 0
    standardization_stats: Standardization | None = field(default=None)

    def __post_init__(self):
        n = len(self.labels)
        p, c = len(self.schema.numerical), len(self.schema.categorical)
        numeric = _frozen(np.reshape(self.numeric, (n, p)), np.float64)
        codes = _frozen(np.reshape(self.codes, (n, c)), np.int64)
        object.__setattr__(self, "numeric", numeric)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "labels", _frozen(self.labels, np.int8))
        object.__setattr__(self, "event_time", _frozen(self.event_time, np.float64))
        object.__setattr__(self, "label_time", _frozen(self.label_time, np.float64))
        object.__setattr__(self, "row_id", _frozen(self.row_id, np.int64))
        for name in ("event_time", "label_time", "row_id"):
            if getattr(self, name).shape != (n,):
                raise SchemaError(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if n:
            if not np.all(np.isfinite(numeric)):
                raise SchemaError("numerical values must be finite")
            if np.any(self.label_time < self.event_time):
                raise SchemaError("label_time must be >= event_time")
            if not np.all((self.labels == 0) | (self.labels == 1)):
                raise SchemaError("labels must be binary")
            if c:
                sizes = np.array(self.schema.vocab_sizes)
                if np.any(codes < 0) or np.any(codes >= sizes):
                    raise SchemaError("category code outside its vocabulary")

    def __len__(self) -> int:
        return len(self.labels)

    def instance(self, i: int) -> Instance:
        return Instance(
            tuple(float(v) for v in self.numeric[i]),
            tuple(int(v) for v in self.codes[i]),
            int(self.labels[i]),
            float(self.event_time[i]),
            float(self.label_time[i]),
        )

    def __iter__(self) -> Iterator[Instance]:
        return (self.instance(i) for i in range(len(self)))

    def take(self, index: np.ndarray) -> Dataset:
        """Row subset (index array or boolean mask), preserving the schema and stats."""
        index = np.asarray(index)
        return replace(
            self,
            numeric=self.numeric[index],
            codes=self.codes[index],
            labels=self.labels[index],
            event_time=self.event_time[index],
            label_time=self.label_time[index],
            row_id=self.row_id[index],
        )

    def sorted_by_time(self) -> Dataset:
        order = np.lexsort((self.row_id, self.event_time))
        return self.take(order)

    def with_domain(self, domain_id: int) -> Dataset:
        return replace(self, domain_id=int(domain_id))

    def replace(self, **changes: Any) -> Dataset:
        return replace(self, **changes)

    def features(self) -> FeatureView:
        return FeatureView(
            numeric=self.numeric,
            codes=self.codes,
            event_time=self.event_time,
            row_id=self.row_id,
            domain_id=self.domain_id,
        )


@dataclass(frozen=True, eq=False)
class FeatureView:
    """Label-free view of a set of rows."""

    numeric: np.ndarray
    codes: np.ndarray
    event_time: np.ndarray
    row_id: np.ndarray
    domain_id: int = 0

    def __len__(self) -> int:
        return len(self.row_id)


def encode_categoricals(
    raw: Mapping[str, Sequence[str]], schema: Schema
) -> np.ndarray:
    """Map category strings to their 0-based vocabulary index, one column per feature."""
    cats = schema.categorical
    n = len(next(iter(raw.values()))) if raw else 0
    out = np.empty((n, len(cats)), dtype=np.int64)
    for j, feat in enumerate(cats):
        lookup = {v: k for k, v in enumerate(feat.vocabulary)}
        try:
            out[:, j] = [lookup[v] for v in raw[feat.name]]
        except KeyError as e:
            raise VocabularyError(f"feature {feat.name!r}: unknown category {e.args[0]!r}") from None
    return out


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", row) from None
    if not math.isfinite(v):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", row)
    return v


def _parse_label(text: str, row: int, column: str) -> int:
    t = text.strip().lower()
    if t in ("1", "1.0", "true"):
        return 1
    if t in ("0", "0.0", "false"):
        return 0
    raise ParseError(f"column {column!r}: label must be binary, got {text!r}", row)


def load_dataset(
    path: str | Path,
    schema: Schema,
    label_delay: float = 0.0,
    domain_id: int = 0,
) -> Dataset:
    """Read a CSV file into a :class:`Dataset` sorted by event time.

    ``label_time`` is ``event_time + label_delay`` unless the file carries a
    ``__label_time`` column or the schema names a per-row delay column.
    Categorical features with an empty vocabulary collect one in first-seen
    order; with a fixed vocabulary, unknown values are rejected.
    """
    ds, _ = _read_table(path, schema, label_delay, domain_id, with_labels=True)
    return ds.sorted_by_time()


def load_domains(path: str | Path, schema: Schema, *, with_labels: bool = True) -> dict[int, Dataset]:
    """Read a file written by :func:`write_datasets`, split by ``__domain_id``.

    Row order within each domain is the file order. Without labels, every
    label is set to 0 and must not be interpreted.
    """
    ds, domains = _read_table(path, schema, 0.0, 0, with_labels=with_labels)
    if domains is None:
        return {0: ds}
    return {int(d): ds.take(domains == d).with_domain(int(d)) for d in np.unique(domains)}


def _read_table(
    path: str | Path,
    schema: Schema,
    label_delay: float,
    domain_id: int,
    with_labels: bool,
) -> tuple[Dataset, np.ndarray | None]:
    if label_delay < 0:
        raise ValueError("label_delay must be nonnegative")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty; a header row is required") from None
        rows = list(reader)

    col = {name: i for i, name in enumerate(header)}
    required = [f.name for f in schema.features] + [schema.event_time_column]
    if with_labels:
        required.append(schema.label_column)
    if schema.label_delay_column and LABEL_TIME_COLUMN not in col:
        required.append(schema.label_delay_column)
    for name in required:
        if name not in col:
            raise SchemaError(f"missing column {name!r}")

    n = len(rows)
    num_feats, cat_feats = schema.numerical, schema.categorical
    numeric = np.empty((n, len(num_feats)))
    labels = np.empty(n, dtype=np.int8)
    event_time = np.empty(n)
    label_time = np.empty(n)
    row_id = np.arange(n, dtype=np.int64)
    raw_cats: dict[str, list[str]] = {f.name: [] for f in cat_feats}

    ti = col[schema.event_time_column]
    li = col[schema.label_column] if with_labels else None
    lti = col.get(LABEL_TIME_COLUMN)
    ldi = col[schema.label_delay_column] if schema.label_delay_column and lti is None else None
    rid = col.get(ROW_ID_COLUMN)
    did = col.get(DOMAIN_COLUMN)
    domains = np.zeros(n, dtype=np.int64) if did is not None else None
    num_idx = [col[f.name] for f in num_feats]
    cat_idx = [(f.name, col[f.name]) for f in cat_feats]

    for r, cells in enumerate(rows):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(cells)}", r)
        for j, ci in enumerate(num_idx):
            numeric[r, j] = _parse_float(cells[ci], r, header[ci])
        for name, ci in cat_idx:
            raw_cats[name].append(cells[ci])
        labels[r] = _parse_label(cells[li], r, header[li]) if li is not None else 0
        t = _parse_float(cells[ti], r, header[ti])
        if t < 0:
            raise ParseError(f"column {header[ti]!r}: negative time {t}", r)
        event_time[r] = t
        if lti is not None:
            label_time[r] = _parse_float(cells[lti], r, LABEL_TIME_COLUMN)
        elif ldi is not None:
            delay = _parse_float(cells[ldi], r, header[ldi])
            if delay < 0:
                raise ParseError(f"column {header[ldi]!r}: negative delay {delay}", r)
            label_time[r] = t + delay
        else:
            label_time[r] = t + label_delay
        if label_time[r] < event_time[r]:
            raise ParseError("label time precedes event time", r)
        if rid is not None:
            row_id[r] = int(_parse_float(cells[rid], r, ROW_ID_COLUMN))
        if domains is not None:
            domains[r] = int(_parse_float(cells[did], r, DOMAIN_COLUMN))

    feats = []
    for f in schema.features:
        if f.kind == CATEGORICAL and not f.vocabulary:
            f = Feature(f.name, f.kind, tuple(dict.fromkeys(raw_cats[f.name])))
        feats.append(f)
    schema = replace(schema, features=tuple(feats))
    codes = encode_categoricals(raw_cats, schema) if cat_feats else np.empty((n, 0), dtype=np.int64)

    ds = Dataset(
        schema=schema,
        numeric=numeric,
        codes=codes,
        labels=labels,
        event_time=event_time,
        label_time=label_time,
        row_id=row_id,
        domain_id=domain_id,
    )
    return ds, domains


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Serialize to CSV with ``__domain_id``, ``__label_time`` and ``__row_id`` columns."""
    write_datasets([dataset], path)


def write_datasets(
    parts: Sequence[Dataset | FeatureView],
    path: str | Path,
    *,
    include_label: bool = True,
    include_label_time: bool = True,
    schema: Schema | None = None,
) -> None:
    """Write several row sets, each tagged with its domain id, into one CSV.

    Label-free output (``include_label=False``) also accepts :class:`FeatureView` parts.
    """
    if schema is None:
        schema = parts[0].schema
    header = [f.name for f in schema.features]
    if include_label:
        header.append(schema.label_column)
    header += [schema.event_time_column, DOMAIN_COLUMN]
    if include_label_time:
        header.append(LABEL_TIME_COLUMN)
    header.append(ROW_ID_COLUMN)
    num_pos = {f.name: j for j, f in enumerate(schema.numerical)}
    cat_pos = {f.name: j for j, f in enumerate(schema.categorical)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for part in parts:
            for i in range(len(part)):
                row = []
                for f in schema.features:
                    if f.kind == NUMERICAL:
                        row.append(format_float(part.numeric[i, num_pos[f.name]]))
                    else:
                        row.append(f.vocabulary[part.codes[i, cat_pos[f.name]]])
                if include_label:
                    row.append(str(int(part.labels[i])))
                row += [format_float(part.event_time[i]), str(part.domain_id)]
                if include_label_time:
                    row.append(format_float(part.label_time[i]))
                row.append(str(int(part.row_id[i])))
                w.writerow(row)


def standardize(dataset: Dataset) -> Dataset:
    """Z-score every numerical feature with population statistics of this dataset."""
    stats = fit_standardization(dataset.numeric)
    return dataset.replace(numeric=stats.apply(dataset.numeric), standardization_stats=stats)


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int = 256
    positive_ratio: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.positive_ratio < 1.0:
            raise ValueError("positive_ratio must lie in (0, 1)")

    @property
    def n_positive(self) -> int:
        # round half up, at least one positive per batch
        return min(self.batch_size, max(1, math.floor(self.positive_ratio * self.batch_size + 0.5)))


def make_batches(
    labels: np.ndarray,
    plan: BatchPlan,
    rng_seed: int,
    n_batches: int | None = None,
) -> Iterator[np.ndarray]:
    """Yield index arrays into ``labels`` with a fixed positive count per batch.

    Positives and negatives are drawn with replacement from their pools. The
    stream is infinite unless ``n_batches`` is given.
    """
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if pos.size == 0 or neg.size == 0:
        raise DegenerateClassError(
            f"need both classes to build batches (positives={pos.size}, negatives={neg.size})"
        )
    k_pos = plan.n_positive
    k_neg = plan.batch_size - k_pos
    gen = np.random.default_rng(rng_seed)
    emitted = 0
    while n_batches is None or emitted < n_batches:
        yield np.concatenate([pos[gen.integers(0, pos.size, k_pos)], neg[gen.integers(0, neg.size, k_neg)]])
        emitted += 1
