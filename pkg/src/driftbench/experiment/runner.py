"""Suite orchestration: sample -> transform -> schedule -> train -> evaluate.

Results are journaled to ``cells.jsonl`` one line per finished cell
(experiment, method, split), so an interrupted run can resume and recompute
only the missing cells. Every random draw is keyed by the master seed and
the cell's coordinates, making the final tables independent of execution
order and worker count.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..data import Dataset, load_dataset
from ..errors import ConfigError, DegenerateClassError, DriftBenchError, NotTrainable
from ..evaluation import EvalRecord, StatReport, UndefinedMetric, build_stat_report, recall_at_fpr
from ..models.external import run_external
from ..models.training import MethodSpec, score, select_training_data, train
from ..sampler import DomainSet, SamplerConfig, calibrated_lambdas, choose_anchors, sample_domains
from ..scheduler import SplitView, Timeline, build_timeline, iterate_splits
from ..seeding import derive_seed, rng
from ..transforms import TransformPlan, apply_plan
from .config import ExperimentConfig

log = logging.getLogger(__name__)

JOURNAL = "cells.jsonl"


def experiment_seed(master: int, index: int) -> int:
    return derive_seed(master, "experiment", index)


def cell_seed(exp_seed: int, method: MethodSpec, split: int) -> int:
    # keyed by the method's declared seed, not its name, so two specs that
    # differ only in name (e.g. native vs external wrapper) train identically
    return derive_seed(exp_seed, "train", method.seed, split)


@dataclass
class Experiment:
    index: int
    seed: int
    domains: DomainSet
    timeline: Timeline
    manifest: dict[str, Any]


def prepare_experiment(config: ExperimentConfig, dataset: Dataset, index: int) -> Experiment:
    seed = experiment_seed(config.seed, index)
    schedule = config.schedule.resolve(rng(seed, "schedule"))
    timeline = build_timeline(schedule)

    sampler_cfg = SamplerConfig(
        k=config.k,
        lam=float(config.sampler.get("lambda", 0.0)),
        seed=derive_seed(seed, "sampler"),
        target_index=config.target_index,
        disjoint=bool(config.sampler.get("disjoint", False)),
    )
    anchors = choose_anchors(dataset, sampler_cfg)
    lambdas = None
    if "target_size" in config.sampler:
        lambdas = calibrated_lambdas(
            dataset, anchors, float(config.sampler["target_size"]),
            float(config.sampler.get("tolerance", 1e-3)),
        )
    domains = sample_domains(dataset, sampler_cfg, anchors=anchors, lambdas=lambdas)

    def gen_for(entry: int, domain: int):
        return rng(seed, "theta", entry, domain), derive_seed(seed, "transform", entry, domain)

    plan, realized = config.transform_plan(gen_for)
    domains = apply_plan(domains, TransformPlan(plan))

    manifest = {
        "experiment_id": index,
        "seed": seed,
        "schedule": schedule.to_dict(),
        "timeline": list(timeline.timestamps),
        "anchor_row_ids": domains.anchors,
        "lambdas": domains.lambdas,
        "domain_sizes": [len(d) for d in domains.domains],
        "transforms": realized,
    }
    return Experiment(index, seed, domains, timeline, manifest)


def evaluate_cell(
    config: ExperimentConfig,
    exp: Experiment,
    view: SplitView,
    method: MethodSpec,
    workroot: Path | None = None,
) -> EvalRecord:
    labels = view.test_labels
    n_test, n_pos = len(labels), int(labels.sum())
    base = dict(experiment_id=exp.index, method=method.name, split=view.step, n_test=n_test, n_test_positives=n_pos)
    if n_pos == 0 or n_pos == n_test:
        return EvalRecord(status="unavailable", diagnostic="test period lacks one of the classes", **base)
    seed = cell_seed(exp.seed, method, view.step)
    try:
        if method.selection == "external":
            with tempfile.TemporaryDirectory(dir=workroot) as tmp:
                scores = run_external(
                    method, view, tmp, schema=exp.domains.target.schema, timeline=exp.timeline,
                    seed=seed, fpr_budget=config.fpr_budget,
                )
        else:
            train_sets, holdout = select_training_data(view, method.selection)
            model = train(method, train_sets, holdout, seed, config.fpr_budget)
            _audit(method, model.metadata["training_domains"], exp.domains.target_index)
            scores = score(model, view.test_inputs)
        recall = recall_at_fpr(scores, labels, config.fpr_budget)
    except (NotTrainable, DegenerateClassError) as e:
        return EvalRecord(status="unavailable", diagnostic=str(e), **base)
    except UndefinedMetric as e:
        return EvalRecord(status="unavailable", diagnostic=str(e), **base)
    except DriftBenchError as e:
        log.warning("cell failed (%s, %s, %s): %s", exp.index, method.name, view.step, e)
        return EvalRecord(status="failed", diagnostic=f"{type(e).__name__}: {e}", **base)
    return EvalRecord(status="ok", recall=float(recall), **base)


def _audit(method: MethodSpec, domains: list[int], target: int) -> None:
    if method.selection == "source_only" and target in domains:
        raise AssertionError(f"{method.name}: source-only training read target domain rows")
    if method.selection == "target_only" and set(domains) - {target}:
        raise AssertionError(f"{method.name}: target-only training read source domain rows")


# -- journal ------------------------------------------------------------------


def append_line(path: Path, payload: dict[str, Any]) -> None:
    """Append one JSON line with a single write on an O_APPEND descriptor."""
    data = (json.dumps(payload, sort_keys=True) + "\n").encode("utf-8")
    fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        os.write(fd, data)
        os.fsync(fd)
    finally:
        os.close(fd)


def read_journal(path: Path) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    """Experiment manifests and cell records from a journal.

    A torn final line (from a crash mid-write) is dropped and truncated away.
    """
    if not path.exists():
        return [], []
    raw = path.read_bytes()
    good_end = 0
    experiments, cells = [], []
    for line in raw.splitlines(keepends=True):
        if not line.endswith(b"\n"):
            break
        try:
            item = json.loads(line)
        except json.JSONDecodeError:
            break
        good_end += len(line)
        (experiments if item.get("type") == "experiment" else cells).append(item)
    if good_end != len(raw):
        with open(path, "r+b") as fh:
            fh.truncate(good_end)
    return experiments, cells


def record_from_json(item: dict[str, Any]) -> EvalRecord:
    return EvalRecord(
        experiment_id=int(item["experiment_id"]),
        method=item["method"],
        split=int(item["split"]),
        status=item["status"],
        recall=item.get("recall"),
        n_test=int(item.get("n_test", 0)),
        n_test_positives=int(item.get("n_test_positives", 0)),
        diagnostic=item.get("diagnostic", ""),
    )


# -- suite --------------------------------------------------------------------


@dataclass
class ResultsStore:
    config: ExperimentConfig
    config_hash: str
    experiments: list[dict[str, Any]]
    records: list[EvalRecord]
    stats: StatReport
    method_order: list[str] = field(default_factory=list)
    created_at: float = 0.0

    @property
    def n_ok(self) -> int:
        return sum(r.status == "ok" for r in self.records)

    @property
    def n_failed(self) -> int:
        return sum(r.status == "failed" for r in self.records)

    def manifest(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "master_seed": self.config.seed,
            "n_experiments": self.config.n_experiments,
            "methods": self.method_order,
            "experiments": self.experiments,
            "created_at": self.created_at,
        }


def sort_records(records: list[EvalRecord], order: list[str]) -> list[EvalRecord]:
    rank = {m: i for i, m in enumerate(order)}
    return sorted(records, key=lambda r: (r.experiment_id, rank.get(r.method, len(rank)), r.method, r.split))


def _run_experiment(
    config: ExperimentConfig,
    dataset: Dataset,
    index: int,
    done: set[tuple[int, str, int]],
    journal: Path | None,
    have_manifest: bool,
    max_cells: int | None = None,
) -> tuple[dict[str, Any] | None, list[dict[str, Any]]]:
    out_cells: list[dict[str, Any]] = []
    try:
        exp = prepare_experiment(config, dataset, index)
    except DriftBenchError as e:
        log.error("experiment %d failed during preparation: %s", index, e)
        manifest = {"type": "experiment", "experiment_id": index, "error": f"{type(e).__name__}: {e}"}
        if journal is not None and not have_manifest:
            append_line(journal, manifest)
        seed = experiment_seed(config.seed, index)
        timeline = build_timeline(config.schedule.resolve(rng(seed, "schedule")))
        for method in config.methods:
            for split in range(1, timeline.n_splits + 1):
                if (index, method.name, split) in done:
                    continue
                rec = EvalRecord(index, method.name, split, "failed", diagnostic=manifest["error"]).to_dict()
                if journal is not None:
                    append_line(journal, rec)
                out_cells.append(rec)
        return manifest, out_cells

    manifest = {"type": "experiment", **exp.manifest}
    if journal is not None and not have_manifest:
        append_line(journal, manifest)
    workroot = journal.parent if journal is not None else None
    for view in iterate_splits(exp.domains, exp.timeline):
        for method in config.methods:
            if (index, method.name, view.step) in done:
                continue
            if max_cells is not None and len(out_cells) >= max_cells:
                return manifest, out_cells
            rec = evaluate_cell(config, exp, view, method, workroot).to_dict()
            if journal is not None:
                append_line(journal, rec)
            out_cells.append(rec)
    return manifest, out_cells


def _worker(args):
    config, index, done, journal, have_manifest = args
    dataset = load_suite_dataset(config)
    return _run_experiment(config, dataset, index, done, journal, have_manifest)


def load_suite_dataset(config: ExperimentConfig) -> Dataset:
    if not config.dataset.exists():
        raise ConfigError(f"dataset {config.dataset} not found")
    return load_dataset(config.dataset, config.schema, label_delay=config.schedule.base.delta_l)


def run_suite(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    workers: int = 1,
    resume: bool = False,
    max_cells: int | None = None,
) -> ResultsStore:
    """Run every experiment of the suite and compute the significance report.

    With ``out_dir`` the run is journaled there; ``resume`` reuses finished
    cells from an existing journal. ``max_cells`` stops after that many new
    cells (used to simulate interruptions).
    """
    config_hash = config.config_hash()
    journal = None
    done: set[tuple[int, str, int]] = set()
    prior_exps: list[dict[str, Any]] = []
    prior_cells: list[dict[str, Any]] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        journal = out_dir / JOURNAL
        header = out_dir / "suite.json"
        if resume and header.exists():
            stored = json.loads(header.read_text(encoding="utf-8"))
            if stored.get("config_hash") != config_hash:
                raise ConfigError("cannot resume: config differs from the interrupted run")
            prior_exps, prior_cells = read_journal(journal)
            done = {(c["experiment_id"], c["method"], c["split"]) for c in prior_cells}
        else:
            if journal.exists():
                journal.unlink()
            header.write_text(
                json.dumps(
                    {"config_hash": config_hash, "config": config.raw, "base_dir": str(config.base_dir.resolve())},
                    indent=2, sort_keys=True,
                ),
                encoding="utf-8",
            )

    have = {e["experiment_id"] for e in prior_exps}
    dataset = load_suite_dataset(config)
    manifests: dict[int, dict[str, Any]] = {e["experiment_id"]: e for e in prior_exps}
    cells = list(prior_cells)
    budget = max_cells

    if workers > 1 and max_cells is None:
        tasks = [(config, i, done, journal, i in have) for i in range(config.n_experiments)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for manifest, new in pool.map(_worker, tasks):
                manifests.setdefault(manifest["experiment_id"], manifest)
                cells.extend(new)
    else:
        for i in range(config.n_experiments):
            if budget is not None and budget <= 0:
                break
            manifest, new = _run_experiment(config, dataset, i, done, journal, i in have, budget)
            manifests.setdefault(i, manifest)
            cells.extend(new)
            if budget is not None:
                budget -= len(new)

    order = [m.name for m in config.methods]
    records = sort_records([record_from_json(c) for c in cells], order)
    stats = build_stat_report(records, config.q, per_split_family=config.fdr_family == "per_split")
    experiments = [
        {k: v for k, v in manifests[i].items() if k != "type"} for i in sorted(manifests)
    ]
    return ResultsStore(config, config_hash, experiments, records, stats, order, created_at=time.time())
