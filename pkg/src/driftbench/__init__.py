"""Multi-domain, time-evolving transfer-learning benchmarks from one tabular dataset."""
from . import _kernels
from .data import (
    BatchPlan,
    Dataset,
    Feature,
    Instance,
    Schema,
    encode_categoricals,
    load_dataset,
    load_schema,
    make_batches,
    standardize,
    write_dataset,
)
from .evaluation import bh_fdr, group_methods, paired_t_test, recall_at_fpr
from .sampler import DomainSet, SamplerConfig, calibrate_lambda, distance, sample_domains
from .scheduler import ScheduleConfig, Timeline, build_timeline, iterate_splits, split_at
from .transforms import TauSchedule, TransformPlan, TransformSpec, apply_plan, tau_eval

__version__ = "0.1.0"
KERNEL_BACKEND = _kernels.BACKEND

__all__ = [
    "BatchPlan",
    "Dataset",
    "DomainSet",
    "Feature",
    "Instance",
    "KERNEL_BACKEND",
    "SamplerConfig",
    "ScheduleConfig",
    "Schema",
    "TauSchedule",
    "Timeline",
    "TransformPlan",
    "TransformSpec",
    "apply_plan",
    "bh_fdr",
    "build_timeline",
    "calibrate_lambda",
    "distance",
    "encode_categoricals",
    "group_methods",
    "iterate_splits",
    "load_dataset",
    "load_schema",
    "make_batches",
    "paired_t_test",
    "recall_at_fpr",
    "sample_domains",
    "split_at",
    "standardize",
    "tau_eval",
    "write_dataset",
]
