"""File protocol for methods that run in a separate process.

For each (experiment, method, split) cell the runner fills a work directory:

``train_labeled.csv``
    every labeled row of every domain, with ``__domain_id``,
    ``__label_time`` and ``__row_id`` columns
``unlabeled_<d>.csv``
    observed but not yet labeled rows of domain ``d`` (no label column)
``test.csv``
    the target rows to score (no label column)
``meta.json``
    schema, step, timeline, target domain, derived seed, method options

The command runs with the work directory as its cwd and must write
``scores.csv``: one decimal score in [0, 1] per line, aligned with the rows
of ``test.csv``.
"""
from __future__ import annotations

import json
import subprocess
import sys
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..data import Dataset, FeatureView, Schema, load_domains, write_datasets
from ..errors import ExternalMethodError, ProtocolError
from ..scheduler import SplitView, Timeline, TrainingView
from .training import MethodSpec

TRAIN_FILE = "train_labeled.csv"
TEST_FILE = "test.csv"
META_FILE = "meta.json"


def unlabeled_file(domain: int) -> str:
    return f"unlabeled_{domain}.csv"


def write_workdir(
    view: TrainingView,
    workdir: str | Path,
    *,
    schema: Schema,
    timeline: Timeline,
    seed: int,
    options: Mapping[str, Any] | None = None,
    fpr_budget: float = 0.01,
) -> Path:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    domains = sorted(view.labeled)
    write_datasets([view.labeled[d] for d in domains], workdir / TRAIN_FILE, schema=schema)
    for d in domains:
        write_datasets(
            [view.unlabeled[d]], workdir / unlabeled_file(d),
            include_label=False, include_label_time=False, schema=schema,
        )
    write_datasets([view.test], workdir / TEST_FILE, include_label=False, include_label_time=False, schema=schema)
    meta = {
        "schema": schema.to_dict(),
        "split": view.step,
        "t_a": view.t_a,
        "timeline": list(timeline.timestamps),
        "schedule": timeline.config.to_dict(),
        "target_domain": view.target_index,
        "domains": domains,
        "seed": seed,
        "fpr_budget": fpr_budget,
        "options": dict(options or {}),
        "n_test": len(view.test),
    }
    with open(workdir / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return workdir


@dataclass
class Workdir:
    """A work directory read back by an external method implemented in Python."""

    meta: dict[str, Any]
    schema: Schema
    view: TrainingView


def read_workdir(workdir: str | Path) -> Workdir:
    workdir = Path(workdir)
    with open(workdir / META_FILE, encoding="utf-8") as fh:
        meta = json.load(fh)
    schema = Schema.from_dict(meta["schema"])
    labeled = load_domains(workdir / TRAIN_FILE, schema)
    unlabeled: dict[int, FeatureView] = {}
    for d in meta["domains"]:
        d = int(d)
        if d not in labeled:
            labeled[d] = _empty(schema, d)
        parts = load_domains(workdir / unlabeled_file(d), schema, with_labels=False)
        unlabeled[d] = parts.get(d, _empty(schema, d)).features()
    test_parts = load_domains(workdir / TEST_FILE, schema, with_labels=False)
    target = int(meta["target_domain"])
    test = test_parts.get(target, _empty(schema, target)).features()
    view = TrainingView(
        step=int(meta["split"]), t_a=float(meta["t_a"]), target_index=target,
        labeled=labeled, unlabeled=unlabeled, test=test,
    )
    return Workdir(meta, schema, view)


def _empty(schema: Schema, domain: int) -> Dataset:
    p, c = len(schema.numerical), len(schema.categorical)
    return Dataset(
        schema=schema, numeric=np.empty((0, p)), codes=np.empty((0, c), dtype=np.int64),
        labels=np.empty(0), event_time=np.empty(0), label_time=np.empty(0), row_id=np.empty(0),
        domain_id=domain,
    )


def read_scores(path: str | Path, n_expected: int) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ProtocolError(f"external method wrote no {Path(path).name}") from None
    lines = [ln.strip() for ln in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if len(lines) != n_expected:
        raise ProtocolError(f"expected {n_expected} scores, got {len(lines)}")
    try:
        scores = np.array([float(x) for x in lines], dtype=np.float64)
    except ValueError as e:
        raise ProtocolError(f"unparseable score: {e}") from None
    if not np.all(np.isfinite(scores)) or np.any((scores < 0) | (scores > 1)):
        raise ProtocolError("scores must be finite and within [0, 1]")
    return scores


def render_command(template, workdir: Path) -> list[str]:
    subst = {"workdir": str(workdir), "python": sys.executable}
    return [part.format(**subst) for part in template]


def run_external(
    spec: MethodSpec,
    view: SplitView | TrainingView,
    workdir: str | Path,
    *,
    schema: Schema,
    timeline: Timeline,
    seed: int,
    fpr_budget: float = 0.01,
) -> np.ndarray:
    """Run an external method on one split and return its test scores.

    Placeholders ``{workdir}`` and ``{python}`` in the command template are
    substituted before the command runs.
    """
    if isinstance(view, SplitView):
        view = view.training_view()
    workdir = write_workdir(
        view, workdir, schema=schema, timeline=timeline, seed=seed,
        options=spec.options, fpr_budget=fpr_budget,
    )
    out = workdir / spec.output_file
    if out.exists():
        out.unlink()
    cmd = render_command(spec.command, workdir)
    try:
        proc = subprocess.run(
            cmd, cwd=workdir, capture_output=True, text=True, timeout=spec.timeout, check=False
        )
    except FileNotFoundError as e:
        raise ExternalMethodError(f"{spec.name}: cannot execute {cmd[0]!r}: {e}") from None
    except subprocess.TimeoutExpired:
        raise ExternalMethodError(f"{spec.name}: timed out after {spec.timeout} s") from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-20:]
        raise ExternalMethodError(
            f"{spec.name}: exit status {proc.returncode}: " + " | ".join(tail),
            returncode=proc.returncode, stderr=proc.stderr,
        )
    return read_scores(out, len(view.test))

