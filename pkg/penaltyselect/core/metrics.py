"""Set functions over source subsets and their submodularity ratios.

Per-hypothesis scores come in two flavours: the max-penalty score
``f_theta(I) = 1 - max_{q in F_theta(I)} xi[theta, q]`` and the
total-penalty score ``g_theta(I) = 1 - rho_theta(I)`` where
``rho_theta(I) = sum_{q in F_theta(I)} xi[theta, q]``. The coverage
function z and the utility Lambda aggregate them over hypotheses.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..utils.helpers import indices_of
from .equiv import equiv_mask
from .model import Instance, InstanceTooLargeError, PenaltyMatrix

logger = logging.getLogger(__name__)

DEFAULT_GAMMA_EXACT_MAX_SOURCES = 12
RATIO_TOLERANCE = 1e-12


class Metric(str, Enum):
    MAX_PENALTY = "max"
    TOTAL_PENALTY = "total"


@dataclass(frozen=True)
class GammaBound:
    """Penalty-gap bound on the submodularity ratio of the max-penalty score."""

    xi_min: float
    xi_max: float
    gamma: float


class SetFunction:
    """A set function over source bitmasks with memoised values.

    Concurrent callers may race on the cache but always store the same value.
    """

    def __init__(self, instance: Instance, evaluate: Callable[[int], float], name: str):
        self.instance = instance
        self.name = name
        self._evaluate = evaluate
        self._cache: Dict[int, float] = {}

    def __call__(self, mask: int) -> float:
        value = self._cache.get(mask)
        if value is None:
            value = self._evaluate(mask)
            self._cache[mask] = value
        return value

    def of(self, subset: Iterable[int]) -> float:
        return self(self.instance.subset_mask(subset))

    def __repr__(self) -> str:
        return f"SetFunction({self.name})"


def _max_over(row: np.ndarray, members: int) -> float:
    return float(max(row[q] for q in indices_of(members)))


def _sum_over(row: np.ndarray, members: int) -> float:
    return float(sum(row[q] for q in indices_of(members)))


def score_mask(instance: Instance, theta: int, subset_mask: int, metric: Metric) -> float:
    """f_theta (max penalty) or g_theta (total penalty) of a source bitmask."""
    members = equiv_mask(instance, subset_mask, theta)
    row = instance.penalties.xi[theta]
    if metric is Metric.MAX_PENALTY:
        return 1.0 - _max_over(row, members)
    return 1.0 - _sum_over(row, members)


def _check_bounds(instance: Instance, bounds: Sequence[float]) -> np.ndarray:
    array = np.asarray(bounds, dtype=float)
    if array.shape != (instance.m,):
        raise ValueError(f"expected {instance.m} penalty bounds, got {array.size}")
    if np.any(array < 0) or np.any(array > 1):
        raise ValueError("penalty bounds must lie in [0, 1]")
    return array


# -- per-hypothesis scores ----------------------------------------------------


def max_penalty_score(instance: Instance, theta_p: int, subset: Iterable[int]) -> float:
    """f_theta(I) = 1 - max penalty over F_theta(I)."""
    return score_mask(instance, theta_p, instance.subset_mask(subset), Metric.MAX_PENALTY)


def truncated_score(
    instance: Instance, theta_p: int, subset: Iterable[int], bound: float
) -> float:
    """f'_theta(I) = min{f_theta(I), 1 - R_theta}."""
    if not 0.0 <= bound <= 1.0:
        raise ValueError(f"penalty bound must lie in [0, 1], got {bound}")
    return min(max_penalty_score(instance, theta_p, subset), 1.0 - bound)


def total_penalty(instance: Instance, theta_p: int, subset: Iterable[int]) -> float:
    """rho_theta(I): summed penalty over F_theta(I)."""
    members = equiv_mask(instance, instance.subset_mask(subset), theta_p)
    return _sum_over(instance.penalties.xi[theta_p], members)


def g_score(instance: Instance, theta_p: int, subset: Iterable[int]) -> float:
    """g_theta(I) = 1 - rho_theta(I)."""
    return 1.0 - total_penalty(instance, theta_p, subset)


# -- aggregates ---------------------------------------------------------------


def coverage_z(
    instance: Instance,
    subset: Iterable[int],
    bounds: Sequence[float],
    metric: Metric = Metric.MAX_PENALTY,
) -> float:
    """z(I): sum over hypotheses of the truncated scores."""
    return coverage_function(instance, bounds, metric).of(subset)


def lambda_score(instance: Instance, subset: Iterable[int]) -> float:
    """Lambda(I): sum over hypotheses of f_theta(I)."""
    return utility_function(instance, Metric.MAX_PENALTY).of(subset)


def score_function(
    instance: Instance, theta: int, metric: Metric = Metric.MAX_PENALTY
) -> SetFunction:
    name = "f" if metric is Metric.MAX_PENALTY else "g"
    return SetFunction(
        instance, lambda mask: score_mask(instance, theta, mask, metric), f"{name}[{theta}]"
    )


def coverage_function(
    instance: Instance, bounds: Sequence[float], metric: Metric = Metric.MAX_PENALTY
) -> SetFunction:
    """z as a SetFunction; with the total-penalty metric the scores are g_theta."""
    ceilings = 1.0 - _check_bounds(instance, bounds)

    def evaluate(mask: int) -> float:
        return float(
            sum(
                min(score_mask(instance, theta, mask, metric), ceilings[theta])
                for theta in range(instance.m)
            )
        )

    return SetFunction(instance, evaluate, f"z[{metric.value}]")


def utility_function(instance: Instance, metric: Metric = Metric.MAX_PENALTY) -> SetFunction:
    """Lambda (max penalty) or the summed g scores (total penalty)."""

    def evaluate(mask: int) -> float:
        return float(
            sum(score_mask(instance, theta, mask, metric) for theta in range(instance.m))
        )

    name = "lambda" if metric is Metric.MAX_PENALTY else "g_sum"
    return SetFunction(instance, evaluate, name)


def violated_constraints(
    instance: Instance,
    subset_mask: int,
    bounds: Sequence[float],
    metric: Metric = Metric.MAX_PENALTY,
    tolerance: float = 1e-9,
) -> List[int]:
    """Hypotheses whose penalty constraint fails for the given source bitmask.

    Max penalty: f_theta(I) >= 1 - R_theta. Total penalty: rho_theta(I) <= R'_theta.
    """
    floors = 1.0 - _check_bounds(instance, bounds)
    return [
        theta
        for theta in range(instance.m)
        if score_mask(instance, theta, subset_mask, metric) < floors[theta] - tolerance
    ]


def constraints_satisfied(
    instance: Instance,
    subset: Iterable[int],
    bounds: Sequence[float],
    metric: Metric = Metric.MAX_PENALTY,
    tolerance: float = 1e-9,
) -> bool:
    mask = instance.subset_mask(subset)
    return not violated_constraints(instance, mask, bounds, metric, tolerance)


# -- submodularity ratio --------------------------------------------------------


def gamma_bound(penalties: PenaltyMatrix) -> GammaBound:
    """Ratio of the smallest to the largest within-row penalty gap.

    Pairs range over i != j including the zero diagonal entry, so a row with
    a zero off-diagonal penalty yields xi_min = 0.
    """
    xi = penalties.xi
    m = xi.shape[0]
    if m < 2:
        raise ValueError("gamma_bound needs at least two hypotheses")
    gaps = np.abs(xi[:, :, None] - xi[:, None, :])
    off_diagonal = ~np.eye(m, dtype=bool)
    pair_gaps = gaps[:, off_diagonal]
    xi_min = float(pair_gaps.min())
    xi_max = float(pair_gaps.max())
    gamma = 1.0 if xi_max == 0 else xi_min / xi_max
    return GammaBound(xi_min=xi_min, xi_max=xi_max, gamma=gamma)


def gamma_exact(
    instance: Instance,
    set_function: SetFunction,
    max_sources: int = DEFAULT_GAMMA_EXACT_MAX_SOURCES,
    tolerance: float = RATIO_TOLERANCE,
) -> float:
    """Exhaustive submodularity ratio over all pairs (A, B), clamped to [0, 1].

    Pairs whose joint marginal is zero are skipped (0/0 is taken as 1 and a
    positive numerator over zero does not constrain the minimum).
    """
    n = instance.n
    if n > max_sources:
        raise InstanceTooLargeError(
            f"gamma_exact enumerates 3^n subset pairs; n={n} exceeds {max_sources}"
        )
    full = instance.full_mask
    values = [set_function(mask) for mask in range(full + 1)]
    best = 1.0

    for base in range(full + 1):
        rest = full & ~base
        if not rest:
            continue
        base_value = values[base]
        gains = {1 << a: values[base | 1 << a] - base_value for a in indices_of(rest)}
        numerators = {0: 0.0}
        added = 0
        while True:
            # next submask of ``rest`` in increasing order
            added = (added - rest) & rest
            if not added:
                break
            low = added & -added
            numerator = numerators[added ^ low] + gains[low]
            numerators[added] = numerator
            joint = values[base | added] - base_value
            if joint <= tolerance:
                continue
            ratio = numerator / joint
            if ratio < best:
                best = ratio

    logger.debug(f"gamma_exact({set_function.name}) over n={n}: {best:.6g}")
    if best >= 1.0 - 1e-9:
        return 1.0
    return max(0.0, best)


def gamma_exact_of(
    instance: Instance,
    kind: str,
    theta: Optional[int] = None,
    bounds: Optional[Sequence[float]] = None,
    max_sources: int = DEFAULT_GAMMA_EXACT_MAX_SOURCES,
) -> float:
    """gamma_exact for a named set function: ``f``, ``g``, ``z`` or ``lambda``."""
    if kind in ("f", "g"):
        if theta is None:
            raise ValueError(f"set function {kind!r} needs a hypothesis")
        metric = Metric.MAX_PENALTY if kind == "f" else Metric.TOTAL_PENALTY
        function = score_function(instance, theta, metric)
    elif kind == "z":
        if bounds is None:
            raise ValueError("set function 'z' needs penalty bounds")
        function = coverage_function(instance, bounds)
    elif kind == "lambda":
        function = utility_function(instance)
    else:
        raise ValueError(f"unknown set function {kind!r}")
    return gamma_exact(instance, function, max_sources=max_sources)
