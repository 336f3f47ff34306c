"""Seeded random penalty matrices, partitions and benchmark instances."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.model import HypothesisSet, Instance, PartitionModel, PenaltyMatrix, SourceModel

logger = logging.getLogger(__name__)

AVC_CLASSES = (
    "cargo",
    "passenger",
    "freight",
    "heavy fighter",
    "interceptor",
    "sailplane",
    "hang glider",
    "paraglider",
    "surveillance UAV",
    "quadrotor",
)
AVC_CRITICAL = frozenset({"heavy fighter", "interceptor", "surveillance UAV", "quadrotor"})

UNIQUE_MIN_GAP = 1e-3
MAX_ROW_ATTEMPTS = 10_000
TIED_PENALTY_LEVELS = 5


class ExperimentError(Exception):
    """Base exception for experiment generation and running."""

    pass


def _two_hypothesis_matrix() -> PenaltyMatrix:
    return PenaltyMatrix([[0.0, 1.0], [1.0, 0.0]])


def _fill_rows(m: int, rows: Sequence[np.ndarray]) -> np.ndarray:
    xi = np.zeros((m, m))
    for p, values in enumerate(rows):
        xi[p, [q for q in range(m) if q != p]] = values
    return xi


def _distinct_enough(values: np.ndarray, min_gap: float) -> bool:
    points = np.sort(np.concatenate([[0.0], values]))
    return bool(np.min(np.diff(points)) >= min_gap)


def random_penalty_matrix(
    m: int, unique: bool, rng: np.random.Generator, min_gap: float = UNIQUE_MIN_GAP
) -> PenaltyMatrix:
    """Random row-stochastic penalties with zero diagonal.

    With ``unique`` every row is redrawn until its entries, zero diagonal
    included, are at least ``min_gap`` apart. Without it, rows are built from
    a few integer weight levels so ties are common.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    if m == 2:
        return _two_hypothesis_matrix()

    rows = []
    for p in range(m):
        if not unique:
            weights = rng.integers(1, TIED_PENALTY_LEVELS + 1, size=m - 1).astype(float)
            rows.append(weights / weights.sum())
            continue
        for _ in range(MAX_ROW_ATTEMPTS):
            values = rng.dirichlet(np.ones(m - 1))
            if _distinct_enough(values, min_gap):
                rows.append(values)
                break
        else:
            raise ExperimentError(
                f"could not draw a row with gaps >= {min_gap} for m={m}"
            )
    return PenaltyMatrix(_fill_rows(m, rows))


def random_partitions(
    m: int,
    n: int,
    rng: np.random.Generator,
    costs: Optional[Sequence[float]] = None,
) -> List[PartitionModel]:
    """One random partition per source from a block-slot assignment.

    Each hypothesis lands in one of ceil(m/2) slots; empty slots are dropped.
    """
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be positive, got m={m}, n={n}")
    if costs is None:
        costs = [1.0] * n
    slots = max(1, math.ceil(m / 2))
    sources = []
    for i in range(n):
        assignment = rng.integers(0, slots, size=m)
        blocks = [np.flatnonzero(assignment == s).tolist() for s in range(slots)]
        sources.append(PartitionModel(cost=costs[i], partition=[b for b in blocks if b]))
    return sources


def partition_from_assignment(cost: float, assignment: Sequence[int]) -> PartitionModel:
    """Partition whose blocks group hypotheses sharing a slot label."""
    blocks = {}
    for theta, slot in enumerate(assignment):
        blocks.setdefault(slot, []).append(theta)
    return PartitionModel(cost=cost, partition=list(blocks.values()))


def max_feasible_gamma(m: int) -> float:
    return 1.0 if m <= 2 else 1.0 / (m - 1)


def gamma_targeted_matrix(
    m: int, gamma_target: float, rng: np.random.Generator
) -> PenaltyMatrix:
    """Penalty matrix whose penalty-gap ratio is at least ``gamma_target``.

    Every row uses the same sorted gap sequence: each gap is
    ``gamma_target`` times the total spread plus a random share of the
    remaining slack, so the smallest gap is at least that fraction of the
    largest. Values are scaled to sum to one and scattered randomly over
    the off-diagonal positions of each row.
    """
    if not 0 < gamma_target <= 1:
        raise ExperimentError(f"gamma target must lie in (0, 1], got {gamma_target}")
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    if m == 2:
        return _two_hypothesis_matrix()

    k = m - 1
    slack = 1.0 - k * gamma_target
    if slack < -1e-12:
        raise ExperimentError(
            f"gamma target {gamma_target} is infeasible for m={m} "
            f"(at most {max_feasible_gamma(m):.6g})"
        )
    gaps = gamma_target + max(0.0, slack) * rng.dirichlet(np.ones(k))
    values = np.cumsum(gaps)
    values = values / values.sum()
    rows = [rng.permutation(values) for _ in range(m)]
    return PenaltyMatrix(_fill_rows(m, rows))


def random_costs(
    n: int, rng: np.random.Generator, cost_range: Tuple[int, int] = (1, 10)
) -> np.ndarray:
    """Integer costs drawn uniformly from ``cost_range`` inclusive."""
    low, high = cost_range
    return rng.integers(low, high + 1, size=n).astype(float)


def random_partition_instance(
    penalties: PenaltyMatrix,
    n: int,
    rng: np.random.Generator,
    cost_range: Optional[Tuple[int, int]] = (1, 10),
    labels: Optional[Sequence[str]] = None,
) -> Instance:
    """Partition-backed instance; ``cost_range=None`` gives unit costs."""
    m = penalties.m
    costs = np.ones(n) if cost_range is None else random_costs(n, rng, cost_range)
    sources = random_partitions(m, n, rng, costs=costs.tolist())
    labels = labels or [f"h{p}" for p in range(m)]
    return Instance(HypothesisSet(tuple(labels)), penalties, sources)


def avc_instance(
    rng: np.random.Generator, n: int = 10, cost_range: Tuple[int, int] = (1, 10)
) -> Instance:
    """Aerial-vehicle classes with a tied random penalty matrix and random partitions."""
    penalties = random_penalty_matrix(len(AVC_CLASSES), unique=False, rng=rng)
    return random_partition_instance(penalties, n, rng, cost_range, labels=AVC_CLASSES)


def avc_bounds(
    rng: np.random.Generator,
    labels: Sequence[str] = AVC_CLASSES,
    benign: Tuple[float, float] = (0.7, 1.0),
    critical: Tuple[float, float] = (0.1, 0.4),
) -> List[float]:
    """Penalty bounds: tight for critical classes, loose for benign ones."""
    return [
        float(rng.uniform(*(critical if label in AVC_CRITICAL else benign)))
        for label in labels
    ]


def fractional_bounds(m: int, rng: np.random.Generator) -> List[float]:
    """Total-penalty bounds r/m with r drawn from 1..m-1."""
    return (rng.integers(1, m, size=m) / m).tolist()


def convergence_demo_instance(
    m: int = 10, class_size: int = 5, peak: float = 0.75
) -> Instance:
    """One likelihood source whose class around hypothesis 0 has ``class_size`` members.

    Members share a column peaked at symbol 0; every other hypothesis is
    peaked at its own symbol, so it is separated from the class.
    """
    outsiders = m - class_size
    if class_size < 1 or outsiders < 0:
        raise ValueError(f"class_size must lie in 1..{m}, got {class_size}")
    symbols = outsiders + 1
    floor = (1.0 - peak) / (symbols - 1) if symbols > 1 else 0.0
    likelihood = np.full((symbols, m), floor)
    likelihood[0, :class_size] = peak if symbols > 1 else 1.0
    for offset in range(outsiders):
        likelihood[offset + 1, class_size + offset] = peak
    xi = np.full((m, m), 1.0 / (m - 1)) if m > 1 else np.zeros((1, 1))
    np.fill_diagonal(xi, 0.0)
    labels = tuple(f"h{p}" for p in range(m))
    return Instance(HypothesisSet(labels), PenaltyMatrix(xi), [SourceModel(1.0, likelihood)])
