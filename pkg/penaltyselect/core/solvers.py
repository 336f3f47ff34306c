"""Greedy source selection, brute-force optima and guarantee certificates.

MCIS picks the cheapest source set meeting every per-hypothesis penalty
bound; MPIS picks the source set within a budget that minimises the summed
penalty. Both come in a max-penalty and a total-penalty flavour.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from ..utils.helpers import indices_of
from .metrics import (
    Metric,
    SetFunction,
    coverage_function,
    gamma_bound,
    gamma_exact,
    utility_function,
    violated_constraints,
)
from .model import Instance, InstanceTooLargeError

logger = logging.getLogger(__name__)

DEFAULT_BRUTE_FORCE_MAX_SOURCES = 20
COVERAGE_TOLERANCE = 1e-9
TIE_TOLERANCE = 1e-12
CERTIFICATE_TOLERANCE = 1e-9

MCIS_BOUND = "mcis-log-ratio"
MPIS_BOUND = "mpis-exp-gamma"
NO_CERTIFICATE = "no certificate"


class SolverError(Exception):
    """Base exception for solver errors."""

    pass


class InfeasibleProblemError(SolverError):
    """Raised when even the full source set violates some penalty bound."""

    def __init__(self, labels: Sequence[str]):
        self.labels = list(labels)
        super().__init__(f"infeasible: penalty bounds violated for {', '.join(self.labels)}")


@dataclass(frozen=True, eq=False)
class McisProblem:
    """Minimum-cost selection subject to per-hypothesis penalty bounds."""

    instance: Instance
    bounds: Tuple[float, ...]
    metric: Metric = Metric.MAX_PENALTY

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        if len(self.bounds) != self.instance.m:
            raise SolverError(
                f"expected {self.instance.m} penalty bounds, got {len(self.bounds)}"
            )
        if any(not 0.0 <= b <= 1.0 for b in self.bounds):
            raise SolverError("penalty bounds must lie in [0, 1]")
        if any(c <= 0 for c in self.instance.costs):
            raise SolverError("minimum-cost selection requires positive source costs")

    @cached_property
    def coverage(self) -> SetFunction:
        return coverage_function(self.instance, self.bounds, self.metric)

    @cached_property
    def violating_hypotheses(self) -> List[int]:
        """Hypotheses whose bound fails even with every source selected."""
        return violated_constraints(
            self.instance, self.instance.full_mask, self.bounds, self.metric
        )

    @property
    def feasible(self) -> bool:
        return not self.violating_hypotheses

    def require_feasible(self) -> None:
        if self.violating_hypotheses:
            labels = [self.instance.hypotheses.labels[p] for p in self.violating_hypotheses]
            raise InfeasibleProblemError(labels)


@dataclass(frozen=True, eq=False)
class MpisProblem:
    """Budgeted selection minimising the summed misclassification penalty."""

    instance: Instance
    budget: float
    metric: Metric = Metric.MAX_PENALTY

    def __post_init__(self):
        if self.budget < 0:
            raise SolverError(f"budget must be nonnegative, got {self.budget}")
        if any(c < 0 for c in self.instance.costs):
            raise SolverError("source costs must be nonnegative")

    @cached_property
    def utility(self) -> SetFunction:
        return utility_function(self.instance, self.metric)


class TraceStep(BaseModel):
    picked: int
    marginal: float
    ratio: float
    value: float


class Certificate(BaseModel):
    """Checked guarantee of a greedy solution against a known optimum."""

    formula: str
    gamma: float = Field(..., description="Submodularity ratio used in the bound")
    gamma_bound: Optional[float] = None
    gamma_exact: Optional[float] = None
    bound: Optional[float] = Field(default=None, description="Bound as stated")
    conservative_bound: Optional[float] = Field(
        default=None, description="MCIS bound that also charges the last step at ratio gamma"
    )
    passes: Optional[bool] = None
    conservative_passes: Optional[bool] = None
    reason: Optional[str] = None


class Solution(BaseModel):
    """A selected source set with its cost, objective and optional certificate.

    ``objective`` is the minimised quantity: cost for MCIS, summed penalty
    for MPIS. ``value`` is the set-function value of the selection (z for
    MCIS, Lambda or the summed g scores for MPIS).
    """

    problem: str
    metric: str
    method: str
    selected: List[int]
    cost: float
    objective: float
    value: float
    initial_value: float = Field(..., description="Set-function value of the empty set")
    target_value: Optional[float] = Field(
        default=None, description="MCIS only: z of the full source set"
    )
    trace: List[TraceStep] = Field(default_factory=list)
    certificate: Optional[Certificate] = None

    def penultimate_value(self) -> float:
        """Set-function value before the last greedy step."""
        if len(self.trace) >= 2:
            return self.trace[-2].value
        return self.initial_value


def _cost(instance: Instance, mask: int) -> float:
    return float(sum(instance.costs[i] for i in indices_of(mask)))


def _mpis_solution(problem: MpisProblem, mask: int, method: str, trace=None) -> Solution:
    value = problem.utility(mask)
    return Solution(
        problem="mpis",
        metric=problem.metric.value,
        method=method,
        selected=indices_of(mask),
        cost=_cost(problem.instance, mask),
        objective=problem.instance.m - value,
        value=value,
        initial_value=problem.utility(0),
        trace=trace or [],
    )


def _mcis_solution(problem: McisProblem, mask: int, method: str, trace=None) -> Solution:
    cost = _cost(problem.instance, mask)
    return Solution(
        problem="mcis",
        metric=problem.metric.value,
        method=method,
        selected=indices_of(mask),
        cost=cost,
        objective=cost,
        value=problem.coverage(mask),
        initial_value=problem.coverage(0),
        target_value=problem.coverage(problem.instance.full_mask),
        trace=trace or [],
    )


# -- greedy -------------------------------------------------------------------


def greedy_mcis(problem: McisProblem, tolerance: float = COVERAGE_TOLERANCE) -> Solution:
    """Cost-benefit greedy on z until z reaches z of the full source set."""
    problem.require_feasible()
    instance = problem.instance
    z = problem.coverage
    target = z(instance.full_mask)
    mask = 0
    trace: List[TraceStep] = []

    while z(mask) < target - tolerance:
        current = z(mask)
        best: Optional[int] = None
        best_ratio = -math.inf
        best_gain = 0.0
        for i in range(instance.n):
            if mask >> i & 1:
                continue
            gain = z(mask | 1 << i) - current
            ratio = gain / instance.costs[i]
            if ratio > best_ratio + TIE_TOLERANCE:
                best, best_ratio, best_gain = i, ratio, gain
        if best is None:
            raise SolverError("no source left but coverage target not reached")
        mask |= 1 << best
        trace.append(
            TraceStep(picked=best, marginal=best_gain, ratio=float(best_ratio), value=z(mask))
        )
        logger.debug(f"greedy_mcis picked source {best} (ratio {best_ratio:.6g})")

    return _mcis_solution(problem, mask, "greedy", trace)


def greedy_mpis(problem: MpisProblem, tolerance: float = COVERAGE_TOLERANCE) -> Solution:
    """Cost-benefit greedy on Lambda among sources that still fit the budget."""
    instance = problem.instance
    utility = problem.utility
    mask = 0
    spent = 0.0
    trace: List[TraceStep] = []

    while True:
        current = utility(mask)
        best: Optional[int] = None
        best_ratio = -math.inf
        best_gain = 0.0
        for i in range(instance.n):
            if mask >> i & 1 or spent + instance.costs[i] > problem.budget + tolerance:
                continue
            gain = utility(mask | 1 << i) - current
            ratio = math.inf if instance.costs[i] == 0 else gain / instance.costs[i]
            if ratio > best_ratio + TIE_TOLERANCE:
                best, best_ratio, best_gain = i, ratio, gain
        if best is None:
            break
        mask |= 1 << best
        spent += float(instance.costs[best])
        trace.append(
            TraceStep(
                picked=best, marginal=best_gain, ratio=float(best_ratio), value=utility(mask)
            )
        )
        logger.debug(f"greedy_mpis picked source {best} (spent {spent:g}/{problem.budget:g})")

    return _mpis_solution(problem, mask, "greedy", trace)


# -- brute force -----------------------------------------------------------------


def _check_size(instance: Instance, max_sources: int) -> None:
    if instance.n > max_sources:
        raise InstanceTooLargeError(
            f"brute force enumerates 2^n subsets; n={instance.n} exceeds {max_sources}"
        )


def brute_force_mcis(
    problem: McisProblem, max_sources: int = DEFAULT_BRUTE_FORCE_MAX_SOURCES
) -> Solution:
    """Cheapest feasible subset; ties go to the lexicographically smallest."""
    instance = problem.instance
    _check_size(instance, max_sources)
    problem.require_feasible()

    best_mask = instance.full_mask
    best_key = (_cost(instance, best_mask), indices_of(best_mask))
    for mask in range(instance.full_mask + 1):
        cost = _cost(instance, mask)
        if cost > best_key[0] + TIE_TOLERANCE:
            continue
        if violated_constraints(instance, mask, problem.bounds, problem.metric):
            continue
        key = (cost, indices_of(mask))
        if cost < best_key[0] - TIE_TOLERANCE or key[1] < best_key[1]:
            best_mask, best_key = mask, key

    return _mcis_solution(problem, best_mask, "brute_force")


def brute_force_mpis(
    problem: MpisProblem, max_sources: int = DEFAULT_BRUTE_FORCE_MAX_SOURCES
) -> Solution:
    """Best affordable subset by value, then cost, then lexicographic order."""
    instance = problem.instance
    _check_size(instance, max_sources)
    utility = problem.utility

    best_mask = 0
    best_value = utility(0)
    best_cost = 0.0
    for mask in range(1, instance.full_mask + 1):
        cost = _cost(instance, mask)
        if cost > problem.budget + COVERAGE_TOLERANCE:
            continue
        value = utility(mask)
        if value > best_value + TIE_TOLERANCE:
            better = True
        elif value < best_value - TIE_TOLERANCE:
            better = False
        elif cost < best_cost - TIE_TOLERANCE:
            better = True
        elif cost > best_cost + TIE_TOLERANCE:
            better = False
        else:
            better = indices_of(mask) < indices_of(best_mask)
        if better:
            best_mask, best_value, best_cost = mask, value, cost

    return _mpis_solution(problem, best_mask, "brute_force")


# -- certificates -------------------------------------------------------------------


def mcis_guarantee(
    solution: Solution,
    opt_cost: float,
    gamma: float,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> Certificate:
    """Check c(I_g) against the log-ratio bound from the greedy trace.

    The stated bound is (1 + ln[(z(D) - z(0)) / (z(D) - z(I^{T-1}))] / gamma) c*;
    the conservative bound divides the whole factor by gamma.
    """
    if gamma <= 0:
        return Certificate(formula=MCIS_BOUND, gamma=gamma, reason=NO_CERTIFICATE)
    if solution.target_value is None:
        raise SolverError("mcis_guarantee needs an MCIS solution")

    if not solution.trace:
        bound = conservative = opt_cost
    else:
        spread = solution.target_value - solution.initial_value
        remaining = solution.target_value - solution.penultimate_value()
        log_ratio = math.log(spread / remaining)
        bound = (1.0 + log_ratio / gamma) * opt_cost
        conservative = (1.0 + log_ratio) / gamma * opt_cost

    slack = tolerance * max(1.0, abs(opt_cost))
    return Certificate(
        formula=MCIS_BOUND,
        gamma=gamma,
        bound=bound,
        conservative_bound=conservative,
        passes=solution.cost <= bound + slack,
        conservative_passes=solution.cost <= conservative + slack,
    )


def mpis_guarantee(
    solution: Solution,
    opt_value: float,
    gamma: float,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> Certificate:
    """Check value >= (1 - e^-gamma) opt + value(empty) e^-gamma."""
    if gamma < 0:
        raise SolverError(f"gamma must be nonnegative, got {gamma}")
    decay = math.exp(-gamma)
    bound = (1.0 - decay) * opt_value + solution.initial_value * decay
    return Certificate(
        formula=MPIS_BOUND,
        gamma=gamma,
        bound=bound,
        passes=solution.value >= bound - tolerance * max(1.0, abs(opt_value)),
    )


def certificate_gamma(
    instance: Instance,
    set_function: SetFunction,
    metric: Metric,
    gamma_exact_max_sources: int = 12,
) -> Tuple[float, Optional[float], Optional[float]]:
    """Returns (gamma used, penalty-gap bound, exhaustive ratio).

    The total-penalty scores are submodular, so gamma is 1 for them.
    """
    if metric is Metric.TOTAL_PENALTY:
        return 1.0, None, None
    bound = gamma_bound(instance.penalties).gamma if instance.m >= 2 else 1.0
    exact = None
    if instance.n <= gamma_exact_max_sources:
        exact = gamma_exact(instance, set_function, max_sources=gamma_exact_max_sources)
    gamma = max(bound, exact if exact is not None else 0.0)
    return min(1.0, gamma), bound, exact


def certify(
    problem,
    solution: Solution,
    optimum: Solution,
    gamma_exact_max_sources: int = 12,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> Solution:
    """Attach a certificate to ``solution`` using a brute-force ``optimum``.

    ``tolerance`` is the relative slack allowed when comparing against the bound.
    """
    if isinstance(problem, McisProblem):
        gamma, bound, exact = certificate_gamma(
            problem.instance, problem.coverage, problem.metric, gamma_exact_max_sources
        )
        certificate = mcis_guarantee(solution, optimum.cost, gamma, tolerance)
    else:
        gamma, bound, exact = certificate_gamma(
            problem.instance, problem.utility, problem.metric, gamma_exact_max_sources
        )
        certificate = mpis_guarantee(solution, optimum.value, gamma, tolerance)
    certificate.gamma_bound = bound
    certificate.gamma_exact = exact
    if certificate.passes is False:
        logger.warning(f"certificate failed: {certificate.model_dump_json()}")
    return solution.model_copy(update={"certificate": certificate})
