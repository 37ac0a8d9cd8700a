"""Experiment configuration: one JSON file describing a whole suite.

Minimal example::

    {
      "dataset": "data.csv",
      "schema": "schema.json",
      "sampler": {"k": 4, "lambda": 0.05},
      "transforms": [
        {"domain": "all", "kind": "rescale", "feature": "amount",
         "alpha": [0.5, 2.0], "tau": {"kind": "linear"}}
      ],
      "schedule": {"preset": "baf"},
      "methods": [
        {"name": "BL-S", "selection": "source_only"},
        {"name": "BL-T", "selection": "target_only"}
      ],
      "n_experiments": 8,
      "seed": 0
    }

Scalar transform parameters may be ranges, written ``[min, max]`` or
``{"min": .., "max": ..}``; a fresh value is drawn uniformly for every
experiment and domain. ``target_marginal`` is always a literal list.
Relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import copy
import hashlib
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..data import BatchPlan, Schema, load_schema
from ..errors import ConfigError, SchemaError
from ..models.training import SELECTIONS, MethodSpec, ModelSpec
from ..scheduler import ScheduleConfig, acquirers_schedule, baf_schedule
from ..transforms import KINDS, TauSchedule, TransformSpec

PRESETS = ("baf", "acquirers-shape")
RANGED_PARAMS = ("alpha", "beta", "gamma", "flip_prob", "threshold")
RANGED_TAU = ("period", "phase")


def is_range(value: Any) -> bool:
    if isinstance(value, Mapping):
        return set(value) == {"min", "max"}
    return isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) for v in value
    )


def draw(value: Any, gen: np.random.Generator) -> Any:
    if not is_range(value):
        return value
    lo, hi = (value["min"], value["max"]) if isinstance(value, Mapping) else value
    if lo > hi:
        raise ConfigError(f"range {value} has min > max")
    return float(gen.uniform(lo, hi)) if hi > lo else float(lo)


@dataclass(frozen=True)
class ScheduleRule:
    """A fixed schedule, or one whose ``t_alpha`` is drawn per experiment."""

    base: ScheduleConfig
    t_alpha_choices: tuple[float, ...] = ()
    beta_offset: float | None = None
    gamma_offset: float | None = None
    preset: str | None = None
    k: int | None = None

    def resolve(self, gen: np.random.Generator) -> ScheduleConfig:
        if not self.t_alpha_choices:
            return self.base
        t_alpha = float(self.t_alpha_choices[int(gen.integers(len(self.t_alpha_choices)))])
        return ScheduleConfig(
            t_alpha=t_alpha,
            t_beta=t_alpha + self.beta_offset,
            t_gamma=t_alpha + self.gamma_offset,
            delta_t=self.base.delta_t,
            delta_l=self.base.delta_l,
        )

    def all_configs(self) -> list[ScheduleConfig]:
        if not self.t_alpha_choices:
            return [self.base]
        return [
            ScheduleConfig(a, a + self.beta_offset, a + self.gamma_offset, self.base.delta_t, self.base.delta_l)
            for a in self.t_alpha_choices
        ]


def schedule_rule(d: Mapping[str, Any]) -> ScheduleRule:
    d = dict(d)
    preset = d.pop("preset", None)
    if preset == "baf":
        base = baf_schedule()
        rule = ScheduleRule(base, preset=preset, k=4)
    elif preset == "acquirers-shape":
        choices = tuple(d.pop("t_alpha_choices", range(8)))
        rule = ScheduleRule(acquirers_schedule(0.0), choices, 16.0, 34.0, preset=preset, k=4)
    elif preset is None:
        choices = tuple(d.pop("t_alpha_choices", ()))
        try:
            if choices:
                base = ScheduleConfig(
                    t_alpha=choices[0], t_beta=choices[0] + d["beta_offset"],
                    t_gamma=choices[0] + d["gamma_offset"], delta_t=d["delta_t"], delta_l=d.get("delta_l", 0.0),
                )
                rule = ScheduleRule(base, choices, d["beta_offset"], d["gamma_offset"])
            else:
                base = ScheduleConfig(d["t_alpha"], d["t_beta"], d["t_gamma"], d["delta_t"], d.get("delta_l", 0.0))
                rule = ScheduleRule(base)
        except KeyError as e:
            raise ConfigError(f"schedule is missing {e.args[0]!r}") from None
        return _validated(rule)
    else:
        raise ConfigError(f"unknown schedule preset {preset!r}; choose from {PRESETS}")
    # presets accept overrides of the label delay and update interval
    if "delta_l" in d or "delta_t" in d:
        base = ScheduleConfig(
            rule.base.t_alpha, rule.base.t_beta, rule.base.t_gamma,
            d.get("delta_t", rule.base.delta_t), d.get("delta_l", rule.base.delta_l),
        )
        rule = ScheduleRule(base, rule.t_alpha_choices, rule.beta_offset, rule.gamma_offset, preset, rule.k)
    return _validated(rule)


def _validated(rule: ScheduleRule) -> ScheduleRule:
    for cfg in rule.all_configs():
        cfg.validate()
    return rule


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Path
    schema: Schema
    sampler: Mapping[str, Any]
    transforms: Sequence[Mapping[str, Any]]
    schedule: ScheduleRule
    methods: Sequence[MethodSpec]
    fpr_budget: float = 0.01
    q: float = 0.01
    fdr_family: str = "pooled"
    n_experiments: int = 1
    seed: int = 0
    raw: Mapping[str, Any] = field(default_factory=dict)
    base_dir: Path = Path(".")

    @property
    def k(self) -> int:
        return int(self.sampler.get("k", self.schedule.k or 4))

    @property
    def target_index(self) -> int:
        return int(self.sampler.get("target_index", 0))

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def transform_plan(self, gen_for) -> tuple[dict[int, list[TransformSpec]], list[dict[str, Any]]]:
        """Concrete specs per domain, drawing ranged parameters.

        ``gen_for(index, domain)`` returns the generator for one entry/domain.
        Also returns the realized parameters for the manifest.
        """
        plan: dict[int, list[TransformSpec]] = {}
        realized = []
        for idx, entry in enumerate(self.transforms):
            for d in _domains_of(entry, self.k, self.target_index):
                gen, seed = gen_for(idx, d)
                spec = build_transform(entry, gen, seed)
                plan.setdefault(d, []).append(spec)
                realized.append({"index": idx, "domain": d, **spec.to_dict()})
        return plan, realized


def _domains_of(entry: Mapping[str, Any], k: int, target: int) -> list[int]:
    dom = entry.get("domain", "all")
    if dom == "all":
        return list(range(k))
    if dom == "sources":
        return [d for d in range(k) if d != target]
    if dom == "target":
        return [target]
    if isinstance(dom, int):
        dom = [dom]
    out = [int(d) for d in dom]
    bad = [d for d in out if not 0 <= d < k]
    if bad:
        raise ConfigError(f"transform references domains {bad}, but k={k}")
    return out


def build_transform(entry: Mapping[str, Any], gen: np.random.Generator, seed: int) -> TransformSpec:
    tau = dict(entry.get("tau") or {})
    for name in RANGED_TAU:
        if name in tau:
            tau[name] = draw(tau[name], gen)
    params = {name: draw(entry[name], gen) for name in RANGED_PARAMS if name in entry}
    marginal = entry.get("target_marginal")
    try:
        return TransformSpec(
            kind=entry["kind"],
            feature=entry["feature"],
            tau=TauSchedule.from_dict(tau),
            seed=seed,
            target_marginal=tuple(marginal) if marginal is not None else None,
            **params,
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"invalid transform {dict(entry)}: {e}") from None


def _method(d: Mapping[str, Any], index: int) -> MethodSpec:
    try:
        name = d["name"]
        selection = d["selection"]
    except KeyError as e:
        raise ConfigError(f"method #{index} is missing {e.args[0]!r}") from None
    if selection not in SELECTIONS:
        raise ConfigError(f"method {name!r}: unknown selection {selection!r}")
    try:
        return MethodSpec(
            name=name,
            selection=selection,
            model=ModelSpec.from_dict(d.get("model")),
            batch_plan=BatchPlan(**d.get("batch_plan", {})),
            seed=int(d.get("seed", 0)),
            command=tuple(d["command"]) if d.get("command") else None,
            output_file=d.get("output_file", "scores.csv"),
            options=d.get("options", {}),
            timeout=d.get("timeout"),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"method {name!r}: {e}") from None


def validate_transforms(config: ExperimentConfig) -> None:
    """Check every transform against the schema without drawing anything."""
    schema = config.schema
    for idx, entry in enumerate(config.transforms):
        kind = entry.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"transform #{idx}: unknown kind {kind!r}")
        feat_name = entry.get("feature")
        try:
            feat = schema.feature(feat_name)
        except SchemaError:
            raise ConfigError(f"transform #{idx}: unknown feature {feat_name!r}") from None
        needed = "categorical" if kind == "categorical_resample" else "numerical"
        if feat.kind != needed:
            raise ConfigError(f"transform #{idx}: {kind} needs a {needed} feature, {feat_name!r} is {feat.kind}")
        if kind == "categorical_resample" and feat.vocabulary:
            if len(entry.get("target_marginal", ())) != len(feat.vocabulary):
                raise ConfigError(f"transform #{idx}: target_marginal length differs from vocabulary size")
        _domains_of(entry, config.k, config.target_index)
        build_transform(entry, np.random.default_rng(0), 0)


def parse_config(raw: Mapping[str, Any], base_dir: str | Path = ".") -> ExperimentConfig:
    base_dir = Path(base_dir)
    raw = copy.deepcopy(dict(raw))
    try:
        dataset = base_dir / raw["dataset"]
        schema_path = base_dir / raw["schema"]
    except KeyError as e:
        raise ConfigError(f"config is missing {e.args[0]!r}") from None
    if not schema_path.exists():
        raise ConfigError(f"schema file {schema_path} not found")
    schema = load_schema(schema_path)
    methods = [_method(m, i) for i, m in enumerate(raw.get("methods", []))]
    if not methods:
        raise ConfigError("config declares no methods")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError("method names must be unique")
    sampler = dict(raw.get("sampler", {}))
    if "lambda" in sampler and "target_size" in sampler:
        raise ConfigError("give either sampler.lambda or sampler.target_size, not both")
    n_exp = int(raw.get("n_experiments", 1))
    if n_exp < 1:
        raise ConfigError("n_experiments must be at least 1")
    family = raw.get("fdr_family", "pooled")
    if family not in ("pooled", "per_split"):
        raise ConfigError("fdr_family must be 'pooled' or 'per_split'")
    cfg = ExperimentConfig(
        dataset=dataset,
        schema=schema,
        sampler=sampler,
        transforms=list(raw.get("transforms", [])),
        schedule=schedule_rule(raw.get("schedule", {"preset": "baf"})),
        methods=methods,
        fpr_budget=float(raw.get("fpr_budget", 0.01)),
        q=float(raw.get("q", 0.01)),
        fdr_family=family,
        n_experiments=n_exp,
        seed=int(raw.get("seed", 0)),
        raw=raw,
        base_dir=base_dir,
    )
    if cfg.k < 2:
        raise ConfigError("need k >= 2 domains (at least one source and one target)")
    if not 0 <= cfg.target_index < cfg.k:
        raise ConfigError("sampler.target_index must lie in [0, k)")
    if not 0.0 <= cfg.fpr_budget < 1.0 or not 0.0 < cfg.q < 1.0:
        raise ConfigError("fpr_budget must lie in [0, 1) and q in (0, 1)")
    validate_transforms(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return parse_config(raw, path.parent)
