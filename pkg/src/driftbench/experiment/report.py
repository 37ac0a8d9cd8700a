"""Report files written for a finished (or resumed) suite."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Any

import numpy as np

from ..data import format_float
from ..errors import DriftBenchError
from ..evaluation import EvalRecord, build_stat_report
from .config import parse_config
from .runner import JOURNAL, ResultsStore, read_journal, record_from_json, sort_records

RECORD_FIELDS = ["experiment_id", "method", "split", "status", "recall", "n_test", "n_test_positives", "diagnostic"]
SUMMARY_FIELDS = ["method", "split", "n", "median", "q25", "q75", "mean"]


class EmptyStoreError(DriftBenchError):
    pass


def summarize(values: list[float]) -> dict[str, float | None]:
    """Median, quartiles (linear interpolation between order statistics) and mean."""
    if not values:
        return {"n": 0, "median": None, "q25": None, "q75": None, "mean": None}
    v = np.asarray(values, dtype=np.float64)
    q25, med, q75 = np.percentile(v, [25, 50, 75], method="linear")
    return {"n": len(v), "median": float(med), "q25": float(q25), "q75": float(q75), "mean": float(v.mean())}


def summary_rows(records: list[EvalRecord], method_order: list[str]) -> list[dict[str, Any]]:
    values: dict[tuple[str, int], list[float]] = defaultdict(list)
    methods = list(method_order)
    splits: set[int] = set()
    for r in records:
        splits.add(r.split)
        if r.method not in methods:
            methods.append(r.method)
        if r.available:
            values[(r.method, r.split)].append(float(r.recall))
    return [
        {"method": m, "split": s, **summarize(values.get((m, s), []))}
        for m in methods
        for s in sorted(splits)
    ]


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def write_csv(path: Path, fields: list[str], rows: list[dict[str, Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_cell(row.get(f)) for f in fields])


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def plot_data(summary: list[dict[str, Any]], store: ResultsStore) -> dict[str, Any]:
    by_method: dict[str, list[dict[str, Any]]] = defaultdict(list)
    for row in summary:
        by_method[row["method"]].append(row)
    series = []
    for m, rows in by_method.items():
        series.append({
            "method": m,
            "split": [r["split"] for r in rows],
            "median": [r["median"] for r in rows],
            "q25": [r["q25"] for r in rows],
            "q75": [r["q75"] for r in rows],
            "mean": [r["mean"] for r in rows],
            "n": [r["n"] for r in rows],
        })
    return {
        "x": "split",
        "y": f"recall at {store.config.fpr_budget:g} FPR",
        "series": series,
        "groups": {str(s): g for s, g in sorted(store.stats.groups.items())},
        "mean_recall": {str(s): m for s, m in sorted(store.stats.mean_recall.items())},
    }


def emit_report(store: ResultsStore, out_dir: str | Path) -> list[Path]:
    """Write records.csv, summary.csv, stats.json, stats.txt, plotdata.json and manifest.json."""
    if not store.records:
        raise EmptyStoreError("results store holds no records")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / name for name in
             ("records.csv", "summary.csv", "stats.json", "stats.txt", "plotdata.json", "manifest.json")}
    write_csv(paths["records.csv"], RECORD_FIELDS, [r.to_dict() for r in store.records])
    summary = summary_rows(store.records, store.method_order)
    write_csv(paths["summary.csv"], SUMMARY_FIELDS, summary)
    write_json(paths["stats.json"], store.stats.to_dict())
    paths["stats.txt"].write_text(store.stats.table() + "\n", encoding="utf-8")
    write_json(paths["plotdata.json"], plot_data(summary, store))
    write_json(paths["manifest.json"], store.manifest())
    return list(paths.values())


def load_records_csv(path: str | Path) -> list[EvalRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalRecord(
                experiment_id=int(row["experiment_id"]),
                method=row["method"],
                split=int(row["split"]),
                status=row["status"],
                recall=float(row["recall"]) if row["recall"] else None,
                n_test=int(row["n_test"]),
                n_test_positives=int(row["n_test_positives"]),
                diagnostic=row["diagnostic"],
            ))
    return out


def load_store(in_dir: str | Path) -> ResultsStore:
    """Rebuild a store from a run directory's journal, for re-reporting."""
    in_dir = Path(in_dir)
    header = json.loads((in_dir / "suite.json").read_text(encoding="utf-8"))
    base = Path(header.get("base_dir", "."))
    config = parse_config(header["config"], base)
    experiments, cells = read_journal(in_dir / JOURNAL)
    order = [m.name for m in config.methods]
    records = sort_records([record_from_json(c) for c in cells], order)
    stats = build_stat_report(records, config.q, per_split_family=config.fdr_family == "per_split")
    exps = [{k: v for k, v in e.items() if k != "type"} for e in sorted(experiments, key=lambda e: e["experiment_id"])]
    return ResultsStore(config, header["config_hash"], exps, records, stats, order)
