"""Acceptance gate: ten criteria, each checked at its stated tolerance and time budget.

Run under pytest (a summary block lists one PASS/FAIL line per criterion) or
directly with ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))

from driftbench.data import Dataset, Schema  # noqa: E402
from driftbench.evaluation import bh_fdr, paired_t_test, recall_at_fpr  # noqa: E402
from driftbench.experiment import emit_report, load_config, run_suite  # noqa: E402
from driftbench.experiment.config import schedule_rule  # noqa: E402
from driftbench.models.nets import MLP, LogisticRegression, flatten, unflatten  # noqa: E402
from driftbench.sampler import (  # noqa: E402
    DomainSet,
    SamplerConfig,
    anchor_distances,
    calibrate_lambda,
    inverse_scale,
    sample_domains,
)
from driftbench.scheduler import ScheduleConfig, build_timeline, iterate_splits  # noqa: E402
from driftbench.transforms import (  # noqa: E402
    TauSchedule,
    TransformPlan,
    TransformSpec,
    apply_anchor_blend,
    apply_categorical_resample,
    apply_plan,
    apply_rescale,
    tau_eval,
)
from synth import flip_suite, make_dataset  # noqa: E402

RESULTS: dict[int, tuple[bool, str]] = {}


def _record(n: int, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    in_time = elapsed < limit
    RESULTS[n] = (ok and in_time, f"{detail}; {elapsed:.1f}s of {limit:g}s")
    assert ok, detail
    assert in_time, f"took {elapsed:.1f}s, budget {limit:g}s"


def summary_lines() -> list[str]:
    return [f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {msg}" for n, (ok, msg) in sorted(RESULTS.items())]


# -- 1 ------------------------------------------------------------------------


def test_c01_schedule_reproduction():
    t0 = time.perf_counter()
    counts = {a: build_timeline(c).n_splits for a, c in
              zip(range(8), schedule_rule({"preset": "acquirers-shape"}).all_configs())}
    baf = build_timeline(schedule_rule({"preset": "baf"}).base)
    ok = (set(counts.values()) == {9} and len(counts) == 8 and baf.n_splits == 5
          and baf.timestamps[0] == 3 and baf.timestamps[-1] == 8)
    detail = f"acquirers splits per t_alpha {sorted(set(counts.values()))}, baf {baf.n_splits} splits {baf.timestamps[0]:g}..{baf.timestamps[-1]:g}"
    _record(1, ok, detail, time.perf_counter() - t0, 1.0)


# -- 2 ------------------------------------------------------------------------


def _split_law_violations(domains: DomainSet, cfg: ScheduleConfig) -> list[str]:
    tl = build_timeline(cfg)
    problems = []
    target = domains.target
    window = target.row_id[(target.event_time >= cfg.t_beta) & (target.event_time < tl.timestamps[-1])]
    seen_test: set[int] = set()
    prev_lab: dict[int, set] = {}
    prev_obs: dict[int, set] = {}
    for view in iterate_splits(domains, tl):
        test = set(view.test_row_ids.tolist())
        if seen_test & test:
            problems.append(f"step {view.step}: test sets overlap")
        seen_test |= test
        for d in range(len(domains)):
            lab = set(view.labeled[d].row_id.tolist())
            unl = set(view.unlabeled[d].row_id.tolist())
            if lab & unl:
                problems.append(f"step {view.step} domain {d}: labeled and unlabeled overlap")
            if d in prev_lab and not prev_lab[d] <= lab:
                problems.append(f"step {view.step} domain {d}: labeled set shrank")
            if d in prev_obs and not prev_obs[d] <= lab | unl:
                problems.append(f"step {view.step} domain {d}: observed set shrank")
            if prev_lab.get(d, set()) & unl:
                problems.append(f"step {view.step} domain {d}: labeled row became unlabeled")
            # every test row of this or any later step must be absent from training now
            future_test = set(target.row_id[target.event_time >= view.t_a].tolist())
            if (lab | unl) & future_test & test:
                problems.append(f"step {view.step} domain {d}: test row reachable by training")
            if d == domains.target_index and (lab | unl) & future_test:
                problems.append(f"step {view.step}: future target row in target training data")
            prev_lab[d], prev_obs[d] = lab, lab | unl
    if seen_test != set(window.tolist()):
        problems.append("test sets do not cover [t_beta, t_l) exactly")
    return problems


def test_c02_split_laws():
    t0 = time.perf_counter()
    problems = []
    cases = 0
    for seed, (t_max, cfg) in enumerate([
        (8.0, ScheduleConfig(0, 3, 8, 1, 1)),
        (45.0, ScheduleConfig(2, 18, 36, 2, 4)),
        (20.0, ScheduleConfig(1, 5, 19, 1.5, 0.7)),
    ]):
        base = make_dataset(10_000, seed=seed, t_max=t_max, label_delay=cfg.delta_l)
        doms = sample_domains(base, SamplerConfig(k=4, lam=0.3, seed=seed))
        problems += _split_law_violations(doms, cfg)
        cases += build_timeline(cfg).n_splits
    ok = not problems
    detail = f"{cases} splits over 3 schedules, 10000 rows each: " + ("no violations" if ok else "; ".join(problems[:3]))
    _record(2, ok, detail, time.perf_counter() - t0, 10.0)


# -- 3 ------------------------------------------------------------------------


def test_c03_sampler_distribution():
    t0 = time.perf_counter()
    ds = make_dataset(20_000, seed=11)
    anchor = 1234
    dist = anchor_distances(ds, anchor, inverse_scale(ds))
    lam = calibrate_lambda(ds, anchor, 2000, tolerance=1e-4, distances=dist)
    p = np.exp(-lam * dist)
    hits = np.zeros(len(ds))
    sizes = []
    n_seeds = 200
    for seed in range(n_seeds):
        out = sample_domains(ds, SamplerConfig(k=1, seed=seed), anchors=[anchor], lambdas=[lam])
        hits[out.domains[0].row_id] += 1
        sizes.append(len(out.domains[0]))
    freq = hits / n_seeds
    se = np.sqrt(p * (1 - p) / n_seeds)
    within = np.abs(freq - p) <= 3 * se
    frac = within.mean()
    mean_size = float(np.mean(sizes))
    ok = frac >= 0.99 and abs(mean_size - 2000) <= 0.02 * 2000
    detail = f"lambda={lam:.4g}, {100 * frac:.2f}% of rows within 3 SE, mean size {mean_size:.1f}"
    _record(3, ok, detail, time.perf_counter() - t0, 60.0)


# -- 4 ------------------------------------------------------------------------


def test_c04_transform_laws():
    t0 = time.perf_counter()
    gen = np.random.default_rng(4)
    ts = gen.uniform(-1e3, 1e3, 20_000)
    taus = np.concatenate([
        tau_eval(TauSchedule("constant"), ts),
        tau_eval(TauSchedule("linear", t_min=-50.0, t_max=70.0), ts),
        *(tau_eval(TauSchedule("sine", period=float(per), phase=float(ph)), ts)
          for per, ph in gen.uniform([0.1, -7], [100, 7], size=(20, 2))),
    ])
    tau_ok = bool(np.all((taus >= 0) & (taus <= 1)))

    x = gen.normal(size=1000)
    lin = TauSchedule("linear", t_min=0.0, t_max=1.0)
    identity_ok = (
        np.array_equal(apply_rescale(x, ts[:1000], 1.0, TauSchedule("sine", period=3.0)), x)
        and np.array_equal(apply_rescale(x, 0.0, 7.5, lin), x)
        and np.array_equal(apply_anchor_blend(x, ts[:1000], 4.0, 0.0, TauSchedule("constant")), x)
        and np.array_equal(apply_anchor_blend(x, 0.0, 4.0, 0.9, lin), x)
    )

    p_target = np.array([0.15, 0.25, 0.6])
    drawn = apply_categorical_resample(np.zeros(100_000, dtype=int), 0.0, p_target, TauSchedule("constant"), gen)
    tv = 0.5 * np.abs(np.bincount(drawn, minlength=3) / drawn.size - p_target).sum()

    doms = sample_domains(make_dataset(2000, seed=4), SamplerConfig(k=2, lam=0.1, seed=0))
    never = TauSchedule("linear", t_min=100.0, t_max=200.0)  # every event time is before t_min
    plan = TransformPlan({d: [TransformSpec("categorical_resample", "c", tau=never, seed=3, target_marginal=(0, 0, 1))]
                          for d in range(2)})
    out = apply_plan(doms, plan)
    zero_ok = all(a.codes.tobytes() == b.codes.tobytes() and a.numeric.tobytes() == b.numeric.tobytes()
                  for a, b in zip(doms.domains, out.domains))

    ok = tau_ok and identity_ok and tv <= 0.02 and zero_ok
    detail = f"tau in [0,1]: {tau_ok}, identities exact: {identity_ok}, TV(tau=1)={tv:.4f}, tau=0 bit-identical: {zero_ok}"
    _record(4, ok, detail, time.perf_counter() - t0, 30.0)


# -- 5 ------------------------------------------------------------------------


def brute_recall(scores: np.ndarray, labels: np.ndarray, budget: float) -> float:
    n_neg = int((labels == 0).sum())
    max_fp = math.floor(round(budget * n_neg, 9))
    best = 0
    for th in np.concatenate([np.unique(scores), [np.inf]]):
        pred = scores >= th
        if int((pred & (labels == 0)).sum()) <= max_fp:
            best = max(best, int((pred & (labels == 1)).sum()))
    return best / int(labels.sum())


def test_c05_metric_oracle():
    t0 = time.perf_counter()
    gen = np.random.default_rng(5)
    mismatches = 0
    checked = 0
    while checked < 1000:
        n = int(gen.integers(2, 201))
        levels = int(gen.integers(1, n + 1))
        scores = gen.integers(0, levels, n) / levels
        labels = (gen.random(n) < gen.uniform(0.05, 0.6)).astype(int)
        if labels.min() == labels.max():
            continue
        checked += 1
        for budget in (0.0, 0.01, 0.1, 0.5):
            if recall_at_fpr(scores, labels, budget) != brute_recall(scores, labels, budget):
                mismatches += 1
    ok = mismatches == 0
    _record(5, ok, f"{checked} instances x 4 budgets, {mismatches} mismatches", time.perf_counter() - t0, 30.0)


# -- 6 ------------------------------------------------------------------------


def brute_step_up(p: list[float], q: float) -> set[int]:
    m = len(p)
    ranked = sorted(range(m), key=lambda i: p[i])
    k = max((r for r in range(1, m + 1) if p[ranked[r - 1]] <= r * q / m), default=0)
    return set(ranked[:k]) | ({i for i in range(m) if p[i] == p[ranked[k - 1]]} if k else set())


def test_c06_statistics_oracles():
    t0 = time.perf_counter()
    gen = np.random.default_rng(6)
    bh_bad = 0
    for _ in range(1000):
        m = int(gen.integers(1, 40))
        p = gen.uniform(0, 0.1, m) if gen.random() < 0.5 else gen.uniform(0, 1, m)
        if gen.random() < 0.3:
            p = np.round(p, 3)  # ties
        q = float(gen.choice([0.01, 0.05, 0.1]))
        if bh_fdr(dict(enumerate(p.tolist())), q) != brute_step_up(p.tolist(), q):
            bh_bad += 1
    p123 = paired_t_test([1, 2, 3], [0, 0, 0])
    worst = 0.0
    for _ in range(100):
        n = int(gen.integers(2, 40))
        a = gen.normal(0.5, 1.0, n)
        b = gen.normal(0.0, 1.0, n)
        d = a - b
        t = d.mean() / (d.std(ddof=1) / math.sqrt(n))
        ref = 2 * stats.t.sf(abs(t), n - 1)
        worst = max(worst, abs(paired_t_test(a, b) - ref))
    ok = bh_bad == 0 and abs(p123 - 0.0742) <= 1e-3 and worst <= 1e-6
    detail = f"BH mismatches {bh_bad}/1000, p([1,2,3])={p123:.6f}, max |p - t-CDF oracle|={worst:.2e}"
    _record(6, ok, detail, time.perf_counter() - t0, 30.0)


# -- 7 ------------------------------------------------------------------------


def _relative_gradient_error(net, n_in: int, gen: np.random.Generator) -> float:
    X = gen.normal(size=(16, n_in))
    y = (gen.random(16) < 0.3).astype(float)
    params = [p + gen.normal(scale=0.7, size=p.shape) for p in net.init_params(n_in, gen)]
    _, grads = net.loss_grad(params, X, y)
    flat = flatten(params)
    num = np.empty_like(flat)
    h = 1e-6
    for i in range(flat.size):
        step = np.zeros_like(flat)
        step[i] = h
        num[i] = (net.loss_grad(unflatten(flat + step, params), X, y)[0]
                  - net.loss_grad(unflatten(flat - step, params), X, y)[0]) / (2 * h)
    g = flatten(grads)
    return float(np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12))


def test_c07_gradient_checks():
    t0 = time.perf_counter()
    gen = np.random.default_rng(7)
    worst = {"logistic": 0.0, "mlp": 0.0}
    for _ in range(50):
        worst["logistic"] = max(worst["logistic"], _relative_gradient_error(LogisticRegression(l2=0.01), 6, gen))
        worst["mlp"] = max(worst["mlp"], _relative_gradient_error(MLP(hidden_sizes=(8, 5), l2=0.01), 6, gen))
    ok = max(worst.values()) <= 1e-4
    detail = f"50 draws, worst relative error logistic {worst['logistic']:.1e}, mlp {worst['mlp']:.1e}"
    _record(7, ok, detail, time.perf_counter() - t0, 30.0)


# -- 8 ------------------------------------------------------------------------


def test_c08_directional_smoke(tmp_path):
    t0 = time.perf_counter()
    cfg = load_config(flip_suite(tmp_path, n_experiments=20, q=0.01))
    store = run_suite(cfg, tmp_path / "out")
    final = max(r.split for r in store.records)
    med = {}
    for m in ("BL-T", "BL-S"):
        vals = [r.recall for r in store.records if r.method == m and r.split == final and r.available]
        med[m] = float(np.median(vals)) if vals else float("nan")
    pair = next((p for p in store.stats.pairs if p.split == final and {p.method_a, p.method_b} == {"BL-T", "BL-S"}), None)
    gap = med["BL-T"] - med["BL-S"]
    ok = gap >= 0.10 and pair is not None and pair.significant
    p_text = f"{pair.p_value:.2e}, significant={pair.significant}" if pair else "untested"
    detail = f"final split {final}: median BL-T {med['BL-T']:.3f} vs BL-S {med['BL-S']:.3f} (gap {gap:.3f}), p={p_text}"
    _record(8, ok, detail, time.perf_counter() - t0, 300.0)


# -- 9 ------------------------------------------------------------------------


def test_c09_determinism_and_resume(tmp_path):
    t0 = time.perf_counter()
    cfg = load_config(flip_suite(tmp_path, n_experiments=4))
    outs = {}
    for name in ("clean", "again"):
        emit_report(run_suite(cfg, tmp_path / name), tmp_path / name)
        outs[name] = (tmp_path / name / "records.csv").read_bytes()
    total = outs["clean"].count(b"\n") - 1
    run_suite(cfg, tmp_path / "resumed", max_cells=total // 2)
    interrupted = (tmp_path / "resumed" / "cells.jsonl").read_bytes().count(b"\n")
    emit_report(run_suite(cfg, tmp_path / "resumed", resume=True), tmp_path / "resumed")
    resumed = (tmp_path / "resumed" / "records.csv").read_bytes()
    same_stats = (tmp_path / "clean" / "stats.json").read_bytes() == (tmp_path / "resumed" / "stats.json").read_bytes()
    ok = outs["clean"] == outs["again"] and resumed == outs["clean"] and same_stats
    detail = (f"{total} cells; repeat run byte-identical: {outs['clean'] == outs['again']}; "
              f"resumed after {total // 2} cells ({interrupted} journal lines) identical: {resumed == outs['clean']}")
    _record(9, ok, detail, time.perf_counter() - t0, 300.0)


# -- 10 -----------------------------------------------------------------------


def test_c10_external_self_equivalence(tmp_path):
    t0 = time.perf_counter()
    model = {"family": "logistic_regression", "max_epochs": 8}
    methods = [
        {"name": "native", "selection": "all_labeled", "model": model, "seed": 1},
        {"name": "stub", "selection": "external", "seed": 1,
         "command": ["{python}", "-m", "driftbench.native_stub", "{workdir}"],
         "options": {"selection": "all_labeled", "model": model}},
    ]
    store = run_suite(load_config(flip_suite(tmp_path, n_experiments=2, methods=methods)), tmp_path / "out")
    by = {(r.experiment_id, r.split, r.method): r for r in store.records}
    cells = sorted({(e, s) for e, s, _ in by})
    diffs = []
    for e, s in cells:
        a, b = by[(e, s, "native")], by[(e, s, "stub")]
        if a.status != b.status:
            diffs.append(math.inf)
        elif a.available:
            diffs.append(abs(a.recall - b.recall))
    n_ok = sum(by[(e, s, "native")].available for e, s in cells)
    worst = max(diffs) if diffs else math.inf
    ok = n_ok == len(cells) and worst <= 1e-9
    _record(10, ok, f"{n_ok}/{len(cells)} splits scored by both, max |recall diff| {worst:.1e}", time.perf_counter() - t0, 120.0)


if __name__ == "__main__":
    checks = [test_c01_schedule_reproduction, test_c02_split_laws, test_c03_sampler_distribution,
              test_c04_transform_laws, test_c05_metric_oracle, test_c06_statistics_oracles,
              test_c07_gradient_checks, test_c08_directional_smoke, test_c09_determinism_and_resume,
              test_c10_external_self_equivalence]
    for fn in checks:
        with tempfile.TemporaryDirectory() as tmp:
            try:
                fn(Path(tmp)) if fn.__code__.co_argcount else fn()
            except AssertionError:
                pass
    print("\n".join(summary_lines()))
    sys.exit(0 if len(RESULTS) == len(checks) and all(ok for ok, _ in RESULTS.values()) else 1)
