"""Batch experiments comparing greedy selections with brute-force optima."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..core.bayes import simulate_run, trajectory_frame
from ..core.equiv import equiv_set
from ..core.metrics import Metric, gamma_bound
from ..core.model import Instance, PenaltyMatrix
from ..core.solvers import (
    CERTIFICATE_TOLERANCE,
    McisProblem,
    MpisProblem,
    Solution,
    brute_force_mcis,
    brute_force_mpis,
    certify,
    greedy_mcis,
    greedy_mpis,
)
from ..utils.helpers import derive_seed
from .generators import (
    AVC_CLASSES,
    ExperimentError,
    avc_bounds,
    avc_instance,
    convergence_demo_instance,
    fractional_bounds,
    gamma_targeted_matrix,
    max_feasible_gamma,
    random_partition_instance,
    random_penalty_matrix,
)

logger = logging.getLogger(__name__)

ExperimentKind = Literal[
    "McisRatio",
    "MpisRatio",
    "ModifiedMcisRatio",
    "ModifiedMpisRatio",
    "GammaSweep",
    "ConvergenceDemo",
]

RESULT_COLUMNS = [
    "trial",
    "seed",
    "kind",
    "m",
    "n",
    "gamma_bound",
    "greedy_value",
    "opt_value",
    "ratio",
    "cert_pass",
    "problem",
    "gamma_target",
]
CSV_FLOAT_FORMAT = "%.12g"
MATRIX_STREAM = 1
GAMMA_SWEEP_MAX_M = 10


class ExperimentSpec(BaseModel):
    """JSON description of one experiment run."""

    kind: ExperimentKind
    trials: int = Field(default=100, ge=1, description="Trials (per problem and target for sweeps)")
    m: Optional[int] = Field(default=None, ge=2, description="Number of hypotheses")
    n: int = Field(default=10, ge=1, le=20, description="Number of sources")
    cost_range: Tuple[int, int] = Field(default=(1, 10), description="Inclusive integer cost range")
    threshold_ranges: Dict[str, Tuple[float, float]] = Field(
        default_factory=lambda: {"benign": (0.7, 1.0), "critical": (0.1, 0.4)},
        description="Penalty-bound ranges for benign and critical classes",
    )
    fixed_bound: Optional[float] = Field(
        default=None, ge=0, le=1, description="Use this bound for every hypothesis"
    )
    fixed_budget: Optional[float] = Field(default=None, ge=0, description="Use this budget")
    gamma_targets: List[float] = Field(default_factory=list)
    unique_penalties: bool = False
    horizon: int = Field(default=50, ge=0, description="ConvergenceDemo samples")
    master_seed: int = 0

    @model_validator(mode="after")
    def _check_kind(self) -> "ExperimentSpec":
        low, high = self.cost_range
        if not 0 < low <= high:
            raise ValueError(f"cost_range must satisfy 0 < low <= high, got {self.cost_range}")
        if self.kind in ("McisRatio", "MpisRatio") and self.m not in (None, len(AVC_CLASSES)):
            raise ValueError(f"{self.kind} uses the {len(AVC_CLASSES)} aerial-vehicle classes")
        if self.kind == "GammaSweep":
            if not self.gamma_targets:
                raise ValueError("GammaSweep needs gamma_targets")
            for target in self.gamma_targets:
                if not 0 < target <= 1:
                    raise ValueError(f"gamma target {target} outside (0, 1]")
        for name in ("benign", "critical"):
            if name not in self.threshold_ranges:
                raise ValueError(f"threshold_ranges needs a {name!r} entry")
        return self


class Counterexample(BaseModel):
    trial: int
    seed: int
    problem: str
    gamma: float
    bound: Optional[float]
    greedy_value: float
    opt_value: float


class ExperimentSummary(BaseModel):
    kind: str
    master_seed: int
    trials: int
    completed: int
    skipped: List[int] = Field(default_factory=list)
    mean_ratio: Optional[float] = None
    max_ratio: Optional[float] = None
    min_ratio: Optional[float] = None
    cert_pass_rate: Optional[float] = None
    all_certificates_pass: bool = True
    counterexamples: List[Counterexample] = Field(default_factory=list)
    gamma_means: Dict[str, Dict[str, float]] = Field(
        default_factory=dict, description="GammaSweep: mean ratio per problem and target"
    )
    convergence: Optional[Dict[str, Any]] = None
    spec_sha256: Optional[str] = None


@dataclass
class ExperimentResult:
    table: pd.DataFrame
    summary: ExperimentSummary


def load_experiment_spec(path: Union[str, Path]) -> ExperimentSpec:
    try:
        return ExperimentSpec.model_validate_json(Path(path).read_text())
    except (OSError, ValidationError) as e:
        raise ExperimentError(f"Failed to load experiment spec {path}: {e}")


# -- trials -------------------------------------------------------------------


@dataclass(frozen=True)
class TrialPlan:
    trial: int
    seed: int
    problem: str
    penalties: Optional[PenaltyMatrix] = None
    gamma_target: Optional[float] = None


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return 1.0 if numerator == 0 else math.inf
    return numerator / denominator


def _draw_mcis(spec: ExperimentSpec, plan: TrialPlan, rng: np.random.Generator) -> McisProblem:
    if spec.kind == "McisRatio":
        instance = avc_instance(rng, spec.n, spec.cost_range)
        bounds = avc_bounds(
            rng,
            instance.hypotheses.labels,
            spec.threshold_ranges["benign"],
            spec.threshold_ranges["critical"],
        )
        metric = Metric.MAX_PENALTY
    elif spec.kind == "ModifiedMcisRatio":
        m = spec.m or 20
        penalties = random_penalty_matrix(m, spec.unique_penalties, rng)
        instance = random_partition_instance(penalties, spec.n, rng, spec.cost_range)
        bounds = fractional_bounds(m, rng)
        metric = Metric.TOTAL_PENALTY
    else:
        instance = random_partition_instance(plan.penalties, spec.n, rng, spec.cost_range)
        bounds = rng.uniform(0.0, 1.0, size=instance.m).tolist()
        metric = Metric.MAX_PENALTY
    if spec.fixed_bound is not None:
        bounds = [spec.fixed_bound] * instance.m
    return McisProblem(instance, tuple(bounds), metric)


def _draw_mpis(spec: ExperimentSpec, plan: TrialPlan, rng: np.random.Generator) -> MpisProblem:
    if spec.kind == "MpisRatio":
        instance = avc_instance(rng, spec.n, spec.cost_range)
        metric = Metric.MAX_PENALTY
    elif spec.kind == "ModifiedMpisRatio":
        m = spec.m or 20
        penalties = random_penalty_matrix(m, spec.unique_penalties, rng)
        instance = random_partition_instance(penalties, spec.n, rng, cost_range=None)
        metric = Metric.TOTAL_PENALTY
    else:
        instance = random_partition_instance(plan.penalties, spec.n, rng, spec.cost_range)
        metric = Metric.MAX_PENALTY
    if spec.fixed_budget is not None:
        budget = spec.fixed_budget
    else:
        # integer budgets from 1 up to the total cost
        budget = float(rng.integers(1, int(instance.costs.sum()) + 1))
    return MpisProblem(instance, budget, metric)


def _row(spec, plan, instance: Instance, greedy: Solution, optimum: Solution) -> Dict[str, Any]:
    if plan.problem == "mcis":
        greedy_value, opt_value = greedy.cost, optimum.cost
    else:
        greedy_value, opt_value = greedy.value, optimum.value
    certificate = greedy.certificate
    return {
        "trial": plan.trial,
        "seed": plan.seed,
        "kind": spec.kind,
        "m": instance.m,
        "n": instance.n,
        "gamma_bound": gamma_bound(instance.penalties).gamma,
        "greedy_value": greedy_value,
        "opt_value": opt_value,
        "ratio": _ratio(greedy_value, opt_value),
        "cert_pass": None if certificate is None else certificate.passes,
        "problem": plan.problem,
        "gamma_target": plan.gamma_target,
        "_certificate": certificate,
    }


def run_trial(
    spec: ExperimentSpec,
    plan: TrialPlan,
    max_attempts: int = 100,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> Optional[Dict[str, Any]]:
    """One greedy-versus-optimum comparison; None when no feasible draw was found."""
    rng = np.random.default_rng(plan.seed)
    if plan.problem == "mpis":
        problem = _draw_mpis(spec, plan, rng)
        greedy = greedy_mpis(problem)
        optimum = brute_force_mpis(problem)
    else:
        for attempt in range(max_attempts):
            problem = _draw_mcis(spec, plan, rng)
            if problem.feasible:
                break
            logger.debug(f"trial {plan.trial}: infeasible draw {attempt}, resampling")
        else:
            logger.info(f"trial {plan.trial}: skipped after {max_attempts} infeasible draws")
            return None
        greedy = greedy_mcis(problem)
        optimum = brute_force_mcis(problem)
    greedy = certify(problem, greedy, optimum, tolerance=tolerance)
    return _row(spec, plan, problem.instance, greedy, optimum)


def plan_trials(spec: ExperimentSpec) -> List[TrialPlan]:
    """Trial schedule with per-trial seeds derived from the master seed."""
    if spec.kind in ("McisRatio", "ModifiedMcisRatio"):
        problems = ["mcis"]
    elif spec.kind in ("MpisRatio", "ModifiedMpisRatio"):
        problems = ["mpis"]
    else:
        problems = ["mcis", "mpis"]

    if spec.kind != "GammaSweep":
        return [
            TrialPlan(t, derive_seed(spec.master_seed, t), problems[0]) for t in range(spec.trials)
        ]

    plans = []
    trial = 0
    for k, target in enumerate(spec.gamma_targets):
        m = spec.m or min(GAMMA_SWEEP_MAX_M, int(math.floor(1.0 / target + 1e-9)) + 1)
        if target > max_feasible_gamma(m) + 1e-12:
            raise ExperimentError(f"gamma target {target} is infeasible for m={m}")
        matrix_rng = np.random.default_rng(derive_seed(spec.master_seed, k, MATRIX_STREAM))
        penalties = gamma_targeted_matrix(m, target, matrix_rng)
        for problem in problems:
            for _ in range(spec.trials):
                seed = derive_seed(spec.master_seed, trial)
                plans.append(TrialPlan(trial, seed, problem, penalties, target))
                trial += 1
    return plans


# -- driver -------------------------------------------------------------------


def _summarize(spec: ExperimentSpec, plans, rows) -> ExperimentSummary:
    summary = ExperimentSummary(
        kind=spec.kind,
        master_seed=spec.master_seed,
        trials=len(plans),
        completed=sum(row is not None for row in rows),
        skipped=[plan.trial for plan, row in zip(plans, rows) if row is None],
    )
    done = [row for row in rows if row is not None]
    if not done:
        return summary
    ratios = np.array([row["ratio"] for row in done], dtype=float)
    summary.mean_ratio = float(ratios.mean())
    summary.max_ratio = float(ratios.max())
    summary.min_ratio = float(ratios.min())

    checked = [row for row in done if row["cert_pass"] is not None]
    if checked:
        summary.cert_pass_rate = sum(bool(row["cert_pass"]) for row in checked) / len(checked)
    for row in checked:
        if row["cert_pass"]:
            continue
        certificate = row["_certificate"]
        summary.counterexamples.append(
            Counterexample(
                trial=row["trial"],
                seed=row["seed"],
                problem=row["problem"],
                gamma=certificate.gamma,
                bound=certificate.bound,
                greedy_value=row["greedy_value"],
                opt_value=row["opt_value"],
            )
        )
        logger.warning(f"certificate counterexample recorded for trial {row['trial']}")
    summary.all_certificates_pass = not summary.counterexamples

    if spec.kind == "GammaSweep":
        for problem in ("mcis", "mpis"):
            by_target: Dict[str, List[float]] = {}
            for row in done:
                if row["problem"] == problem:
                    by_target.setdefault(f"{row['gamma_target']:g}", []).append(row["ratio"])
            summary.gamma_means[problem] = {
                target: float(np.mean(values)) for target, values in by_target.items()
            }
    return summary


def _run_convergence_demo(spec: ExperimentSpec) -> ExperimentResult:
    instance = convergence_demo_instance(m=spec.m or 10)
    rng = np.random.default_rng(derive_seed(spec.master_seed, 0))
    result = simulate_run(instance, [0], 0, spec.horizon, rng)
    final = result.beliefs[-1]
    members = equiv_set(instance, [0], 0).to_list()
    outside = [q for q in range(instance.m) if q not in members]
    summary = ExperimentSummary(
        kind=spec.kind,
        master_seed=spec.master_seed,
        trials=1,
        completed=1,
        convergence={
            "horizon": spec.horizon,
            "class_size": len(members),
            "final_in_class": [float(final[q]) for q in members],
            "final_out_of_class_max": float(final[outside].max()) if outside else 0.0,
            "max_in_class_gap": max(result.diagnostics.in_class_gap),
        },
    )
    return ExperimentResult(trajectory_frame(result, instance.hypotheses.labels), summary)


def run_experiment(
    spec: ExperimentSpec,
    threads: int = 1,
    max_attempts: int = 100,
    tolerance: float = CERTIFICATE_TOLERANCE,
) -> ExperimentResult:
    """Run every trial of ``spec``; results do not depend on ``threads``."""
    if spec.kind == "ConvergenceDemo":
        return _run_convergence_demo(spec)

    plans = plan_trials(spec)
    logger.info(f"Running {spec.kind}: {len(plans)} trials on {threads} worker(s)")
    rows = Parallel(n_jobs=threads)(
        delayed(run_trial)(spec, plan, max_attempts, tolerance) for plan in plans
    )
    summary = _summarize(spec, plans, rows)
    records = [
        {key: value for key, value in row.items() if key in RESULT_COLUMNS}
        for row in rows
        if row is not None
    ]
    table = pd.DataFrame.from_records(records, columns=RESULT_COLUMNS)
    return ExperimentResult(table, summary)


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> None:
    table.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def table_to_csv(table: pd.DataFrame) -> str:
    return table.to_csv(index=False, float_format=CSV_FLOAT_FORMAT)
