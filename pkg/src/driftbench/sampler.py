"""Build correlated sub-domains from one dataset around random anchor rows.

Each domain keeps row ``i`` independently with probability
``exp(-lam * distance(row_i, anchor))``. The distance adds squared
differences of numerical features, each divided by its std on the full
dataset, to the number of categorical features that differ.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import Dataset, Instance, Schema
from .errors import AnchorError, EmptyInputError, InfeasibleError, NumericalError, SchemaError
from .seeding import derive_seed, row_uniforms


@dataclass(frozen=True)
class SamplerConfig:
    k: int = 4
    lam: float = 0.0
    seed: int = 0
    target_index: int = 0
    disjoint: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not 0 <= self.target_index < self.k:
            raise ValueError("target_index must lie in [0, k)")


@dataclass(frozen=True, eq=False)
class DomainSet:
    domains: list[Dataset]
    anchors: list[int]  # row ids in the source dataset
    target_index: int = 0
    lambdas: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.domains)

    @property
    def target(self) -> Dataset:
        return self.domains[self.target_index]

    @property
    def source_indices(self) -> list[int]:
        return [d for d in range(len(self.domains)) if d != self.target_index]


def inverse_scale(dataset: Dataset) -> np.ndarray:
    """1/std per numerical feature; 0 for constant features so they add nothing."""
    std = dataset.numeric.std(axis=0) if len(dataset) else np.ones(dataset.numeric.shape[1])
    with np.errstate(divide="ignore"):
        return np.where(std > 0, 1.0 / np.where(std > 0, std, 1.0), 0.0)


def distance(a: Instance, b: Instance, schema: Schema, sigma: Sequence[float]) -> float:
    """Mixed-type distance between two rows."""
    p, c = len(schema.numerical), len(schema.categorical)
    if len(a.numeric_values) != p or len(b.numeric_values) != p:
        raise SchemaError("numeric values do not match the schema")
    if len(a.category_codes) != c or len(b.category_codes) != c:
        raise SchemaError("category codes do not match the schema")
    if len(sigma) != p:
        raise SchemaError("need one std per numerical feature")
    total = 0.0
    for x, y, s in zip(a.numeric_values, b.numeric_values, sigma):
        if s > 0:
            total += ((x - y) / s) ** 2
    total += sum(1 for x, y in zip(a.category_codes, b.category_codes) if x != y)
    return total


def anchor_distances(dataset: Dataset, anchor_pos: int, inv_sigma: np.ndarray | None = None) -> np.ndarray:
    """Distance from every row of ``dataset`` to the row at position ``anchor_pos``."""
    if inv_sigma is None:
        inv_sigma = inverse_scale(dataset)
    return _kernels.anchor_distances(
        dataset.numeric,
        dataset.codes,
        dataset.numeric[anchor_pos],
        dataset.codes[anchor_pos],
        inv_sigma,
    )


def expected_size(distances: np.ndarray, lam: float) -> float:
    return float(np.exp(-lam * distances).sum())


def calibrate_lambda(
    dataset: Dataset,
    anchor: int,
    target_size: float,
    tolerance: float = 1e-3,
    *,
    distances: np.ndarray | None = None,
    max_steps: int = 200,
) -> float:
    """Bisect for the decay rate whose expected domain size hits ``target_size``.

    ``anchor`` is a row position in ``dataset``. Stops once the expected size
    is within ``tolerance * target_size`` of the target.
    """
    if distances is None:
        distances = anchor_distances(dataset, anchor)
    n = len(distances)
    if not 1 <= target_size <= n:
        raise InfeasibleError(f"target size {target_size} outside [1, {n}]")
    if n - target_size <= tolerance * target_size:
        return 0.0
    floor = float(np.count_nonzero(distances == 0))
    if floor > target_size * (1 + tolerance):
        raise InfeasibleError(
            f"{int(floor)} rows coincide with the anchor; expected size cannot drop to {target_size}"
        )

    lo, hi = 0.0, 1.0
    while expected_size(distances, hi) > target_size:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("could not bracket lambda")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        size = expected_size(distances, mid)
        if abs(size - target_size) <= tolerance * target_size:
            return mid
        if size > target_size:
            lo = mid
        else:
            hi = mid
    raise NumericalError(f"bisection did not converge in {max_steps} steps")


def _choose_anchors(n: int, config: SamplerConfig) -> list[int]:
    if config.k > n:
        raise AnchorError(f"cannot draw {config.k} distinct anchors from {n} rows")
    gen = np.random.default_rng(derive_seed(config.seed, "anchors"))
    return [int(i) for i in gen.choice(n, size=config.k, replace=False)]


def sample_domains(
    dataset: Dataset,
    config: SamplerConfig,
    *,
    anchors: Sequence[int] | None = None,
    lambdas: Sequence[float] | None = None,
) -> DomainSet:
    """Draw ``config.k`` domains from ``dataset``.

    ``anchors`` (row positions) overrides uniform anchor selection and
    ``lambdas`` gives a per-domain decay rate in place of ``config.lam``.
    Inclusion draws are keyed by (seed, domain, row id), so the result does
    not depend on row order.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyInputError("cannot sample domains from an empty dataset")
    if anchors is None:
        anchors = _choose_anchors(n, config)
    elif len(anchors) != config.k:
        raise AnchorError(f"expected {config.k} anchors, got {len(anchors)}")
    if lambdas is None:
        lambdas = [config.lam] * config.k
    inv_sigma = inverse_scale(dataset)

    taken = np.zeros(n, dtype=bool)
    domains = []
    for d, (a, lam) in enumerate(zip(anchors, lambdas)):
        dist = anchor_distances(dataset, a, inv_sigma)
        u = row_uniforms(dataset.row_id, config.seed, "domain", d)
        keep = u < np.exp(-lam * dist)
        keep[a] = True  # exp(0) = 1; guard against u rounding
        if config.disjoint:
            keep &= ~taken
            taken |= keep
        domains.append(dataset.take(keep).with_domain(d).sorted_by_time())

    return DomainSet(
        domains=domains,
        anchors=[int(dataset.row_id[a]) for a in anchors],
        target_index=config.target_index,
        lambdas=[float(x) for x in lambdas],
    )


def calibrated_lambdas(dataset: Dataset, anchors: Sequence[int], target_size: float, tolerance: float = 1e-3) -> list[float]:
    """One decay rate per anchor, each giving expected size ``target_size``."""
    inv_sigma = inverse_scale(dataset)
    return [
        calibrate_lambda(dataset, a, target_size, tolerance, distances=anchor_distances(dataset, a, inv_sigma))
        for a in anchors
    ]


def choose_anchors(dataset: Dataset, config: SamplerConfig) -> list[int]:
    return _choose_anchors(len(dataset), config)


__all__ = [
    "SamplerConfig",
    "DomainSet",
    "distance",
    "anchor_distances",
    "calibrate_lambda",
    "calibrated_lambdas",
    "choose_anchors",
    "expected_size",
    "sample_domains",
    "inverse_scale",
]
