"""Command-line entry point.

Subcommands::

    driftbench run --config suite.json --out results/ [--workers N] [--resume]
    driftbench sample --data data.csv --schema schema.json --k 4 --lambda 0.1 --out domains/
    driftbench schedule --dry-run --preset baf
    driftbench schedule --dry-run --config suite.json [--json]
    driftbench report --in results/ [--out other/]

Exit status: 0 on success, 2 when some cells failed, 1 on fatal errors.
Log verbosity follows ``DRIFTBENCH_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .data import load_dataset, load_schema, write_dataset
from .errors import DriftBenchError
from .experiment.config import load_config, schedule_rule
from .experiment.report import emit_report, load_store
from .experiment.runner import load_suite_dataset, prepare_experiment, run_suite
from .sampler import SamplerConfig, calibrated_lambdas, choose_anchors, sample_domains
from .scheduler import build_timeline, split_sizes

log = logging.getLogger("driftbench")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


def _setup_logging() -> None:
    level = os.environ.get("DRIFTBENCH_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def cmd_run(args) -> int:
    config = load_config(args.config)
    store = run_suite(config, args.out, workers=args.workers, resume=args.resume)
    if store.n_ok == 0:
        log.error("no cell produced a result")
        if store.records:
            emit_report(store, args.out)
        return EXIT_FATAL
    emit_report(store, args.out)
    print(f"{len(store.records)} cells: {store.n_ok} ok, {store.n_failed} failed -> {args.out}")
    return EXIT_PARTIAL if store.n_failed else EXIT_OK


def cmd_report(args) -> int:
    store = load_store(args.in_dir)
    if not store.records:
        print("no records found", file=sys.stderr)
        return EXIT_FATAL
    paths = emit_report(store, args.out or args.in_dir)
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def cmd_sample(args) -> int:
    if (args.lam is None) == (args.target_size is None):
        print("give exactly one of --lambda and --target-size", file=sys.stderr)
        return EXIT_FATAL
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema, label_delay=args.label_delay)
    cfg = SamplerConfig(k=args.k, lam=args.lam or 0.0, seed=args.seed, disjoint=args.disjoint)
    anchors = choose_anchors(dataset, cfg)
    lambdas = calibrated_lambdas(dataset, anchors, args.target_size) if args.target_size else None
    domains = sample_domains(dataset, cfg, anchors=anchors, lambdas=lambdas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for d, ds in enumerate(domains.domains):
        path = out / f"domain_{d}.csv"
        write_dataset(ds, path)
        files.append(path.name)
    manifest = {
        "anchor_row_ids": domains.anchors,
        "lambdas": domains.lambdas,
        "sizes": [len(ds) for ds in domains.domains],
        "files": files,
        "seed": args.seed,
        "target_index": domains.target_index,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(manifest))
    return EXIT_OK


def _table(rows: list[dict]) -> str:
    if not rows:
        return "(no splits)"
    cols = list(rows[0])
    widths = {c: max(len(c), *(len(f"{r[c]:g}" if isinstance(r[c], float) else str(r[c])) for r in rows)) for c in cols}
    fmt = lambda v: f"{v:g}" if isinstance(v, float) else str(v)  # noqa: E731
    lines = ["  ".join(c.rjust(widths[c]) for c in cols)]
    lines += ["  ".join(fmt(r[c]).rjust(widths[c]) for c in cols) for r in rows]
    return "\n".join(lines)


def cmd_schedule(args) -> int:
    if not args.dry_run:
        print("schedule only supports --dry-run", file=sys.stderr)
        return EXIT_FATAL
    if args.config:
        config = load_config(args.config)
        dataset = load_suite_dataset(config)
        exp = prepare_experiment(config, dataset, args.experiment)
        timeline, rows = exp.timeline, split_sizes(exp.domains, exp.timeline)
    else:
        spec = {"preset": args.preset}
        rule = schedule_rule(spec)
        cfg = rule.base
        if args.t_alpha is not None and rule.t_alpha_choices:
            cfg = next(c for c in rule.all_configs() if c.t_alpha == args.t_alpha)
        timeline = build_timeline(cfg)
        rows = [
            {"step": a, "t_a": timeline.timestamps[a - 1], "t_next": timeline.timestamps[a]}
            for a in range(1, timeline.n_splits + 1)
        ]
    payload = {"schedule": timeline.config.to_dict(), "timeline": list(timeline.timestamps), "splits": rows}
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"timeline: {', '.join(f'{t:g}' for t in timeline.timestamps)}  ({timeline.n_splits} test periods)")
        print(_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftbench", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment suite")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--resume", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sample", help="sample k domains from a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--target-size", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--label-delay", type=float, default=0.0)
    s.add_argument("--disjoint", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    t = sub.add_parser("schedule", help="print a timeline and per-split set sizes")
    t.add_argument("--dry-run", action="store_true")
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=("baf", "acquirers-shape"))
    g.add_argument("--config")
    t.add_argument("--t-alpha", type=float)
    t.add_argument("--experiment", type=int, default=0)
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_schedule)

    rep = sub.add_parser("report", help="re-emit report files from a run directory")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DriftBenchError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
