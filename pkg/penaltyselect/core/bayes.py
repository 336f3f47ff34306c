"""Bayesian belief updates, observation sampling and finite-sample certificates.

Beliefs are kept in log space and normalised with logsumexp after every
update. Only the uniform prior is supported.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from scipy.special import logsumexp

from ..utils.helpers import derive_rng
from .equiv import equiv_set
from .model import Backing, BackingError, Instance, SourceModel, compute_L, kl_set

logger = logging.getLogger(__name__)

CEIL_SLACK = 1e-9


class SimulationError(Exception):
    """Base exception for simulation errors."""

    pass


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Log beliefs over all hypotheses after ``t`` updates with ``subset``."""

    log_belief: np.ndarray
    t: int
    subset: Tuple[int, ...]

    @property
    def beliefs(self) -> np.ndarray:
        return np.exp(self.log_belief)


@dataclass(frozen=True)
class SampleComplexity:
    N: int
    N_tilde: int
    delta: float
    epsilon: float
    L: float
    mu_th: float
    K_min: float


def _likelihood_sources(instance: Instance, subset: Iterable[int]) -> Tuple[int, ...]:
    if instance.backing is not Backing.LIKELIHOOD:
        raise BackingError("simulation requires likelihoods")
    indices = tuple(sorted(set(subset)))
    instance.subset_mask(indices)
    return indices


def _normalize(log_weights: np.ndarray) -> np.ndarray:
    return log_weights - logsumexp(log_weights, axis=-1, keepdims=True)


def uniform_belief(instance: Instance, subset: Iterable[int] = ()) -> BeliefState:
    indices = tuple(sorted(set(subset)))
    return BeliefState(np.full(instance.m, -math.log(instance.m)), 0, indices)


def _observation_log_likelihood(
    instance: Instance, subset: Sequence[int], observations: np.ndarray
) -> np.ndarray:
    """Per-step joint log likelihood, shape (T, m), for observations of shape (T, |I|)."""
    steps = observations.shape[0]
    total = np.zeros((steps, instance.m))
    for column, i in enumerate(subset):
        source = instance.sources[i]
        assert isinstance(source, SourceModel)
        symbols = observations[:, column]
        if np.any(symbols < 0) or np.any(symbols >= source.observation_space_size):
            raise SimulationError(f"observation index out of range for source {i}")
        total += source.log_likelihood[symbols, :]
    return total


def bayes_update(
    state: BeliefState, instance: Instance, observation: Sequence[int]
) -> BeliefState:
    """One step of Bayes' rule with the joint observation of ``state.subset``."""
    subset = _likelihood_sources(instance, state.subset)
    symbols = np.asarray(observation, dtype=int).reshape(1, -1)
    if symbols.shape[1] != len(subset):
        raise SimulationError(
            f"expected {len(subset)} observation symbols, got {symbols.shape[1]}"
        )
    step = _observation_log_likelihood(instance, subset, symbols)[0]
    return BeliefState(_normalize(state.log_belief + step), state.t + 1, subset)


def batch_log_posterior(
    instance: Instance, subset: Iterable[int], observations: np.ndarray
) -> np.ndarray:
    """Log posterior after all observations at once, from the uniform prior."""
    indices = _likelihood_sources(instance, subset)
    symbols = np.asarray(observations, dtype=int).reshape(-1, len(indices))
    log_prior = np.full(instance.m, -math.log(instance.m))
    total = _observation_log_likelihood(instance, indices, symbols).sum(axis=0)
    return _normalize(log_prior + total)


def sample_observations(
    instance: Instance,
    subset: Iterable[int],
    theta: int,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """``size`` i.i.d. joint observations under ``theta``, shape (size, |I|)."""
    indices = _likelihood_sources(instance, subset)
    out = np.zeros((size, len(indices)), dtype=int)
    for column, i in enumerate(indices):
        source = instance.sources[i]
        probabilities = source.likelihood[:, theta]
        out[:, column] = rng.choice(source.observation_space_size, size=size, p=probabilities)
    return out


def sample_observation(
    instance: Instance, subset: Iterable[int], theta: int, rng: np.random.Generator
) -> Tuple[int, ...]:
    """A single joint observation under ``theta``."""
    return tuple(int(o) for o in sample_observations(instance, subset, theta, rng, 1)[0])


# -- sample complexity ----------------------------------------------------------


def _ceil(value: float) -> int:
    # absorbs rounding in ln(2/delta) for inputs such as delta = 2/e
    return int(math.ceil(value - CEIL_SLACK * max(1.0, abs(value))))


def _hoeffding_term(delta: float, epsilon: float, L: float) -> float:
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    return 2.0 * L**2 / epsilon**2 * math.log(2.0 / delta)


def sample_complexity_N(delta: float, epsilon: float, L: float) -> int:
    """Samples after which the belief bounds hold with probability 1 - delta."""
    return _ceil(_hoeffding_term(delta, epsilon, L))


def sample_complexity_threshold(
    delta: float, epsilon: float, L: float, mu_th: float, K_min: float
) -> int:
    """Samples after which ruled-out beliefs stay below ``mu_th``."""
    hoeffding = _hoeffding_term(delta, epsilon, L)
    if not 0 < mu_th < 1:
        raise ValueError(f"mu_th must lie in (0, 1), got {mu_th}")
    if K_min <= 0:
        raise ValueError(
            "K_min is zero: some pair has divergence exactly epsilon; perturb epsilon"
        )
    return _ceil(max(hoeffding, math.log(1.0 / mu_th) / K_min))


def sample_complexity(
    delta: float, epsilon: float, L: float, mu_th: float, K_min: float
) -> SampleComplexity:
    return SampleComplexity(
        N=sample_complexity_N(delta, epsilon, L),
        N_tilde=sample_complexity_threshold(delta, epsilon, L, mu_th, K_min),
        delta=delta,
        epsilon=epsilon,
        L=L,
        mu_th=mu_th,
        K_min=K_min,
    )


# -- simulation ---------------------------------------------------------------


class SimulationDiagnostics(BaseModel):
    """Per-step checks of the finite-sample belief bounds."""

    true_theta: int
    subset: List[int]
    horizon: int
    equivalence_class: List[int]
    divergences: Dict[int, float] = Field(
        default_factory=dict, description="K(theta_p, theta_q) for theta_q outside the class"
    )
    epsilon: Optional[float] = None
    epsilon_not_below_divergence: List[int] = Field(
        default_factory=list, description="theta_q with epsilon >= K(theta_p, theta_q)"
    )
    L: float
    N: Optional[int] = None
    N_tilde: Optional[int] = None
    in_class_gap: List[float] = Field(default_factory=list)
    bound_violations: List[List[int]] = Field(default_factory=list)
    threshold_exceeded: List[bool] = Field(default_factory=list)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    log_trajectory: np.ndarray
    observations: np.ndarray
    diagnostics: SimulationDiagnostics

    @property
    def beliefs(self) -> np.ndarray:
        return np.exp(self.log_trajectory)

    def states(self) -> List[BeliefState]:
        subset = tuple(self.diagnostics.subset)
        return [BeliefState(row, t, subset) for t, row in enumerate(self.log_trajectory)]


def divergence_profile(
    instance: Instance, subset: Iterable[int], theta_p: int
) -> Dict[int, float]:
    """K(theta_p, theta_q) for every theta_q outside F_theta_p(I)."""
    indices = _likelihood_sources(instance, subset)
    members = equiv_set(instance, indices, theta_p)
    return {
        q: kl_set(instance, indices, theta_p, q) for q in range(instance.m) if q not in members
    }


def _log_trajectory(instance: Instance, subset: Sequence[int], observations: np.ndarray):
    log_prior = np.full(instance.m, -math.log(instance.m))
    steps = _observation_log_likelihood(instance, subset, observations)
    cumulative = np.vstack([np.zeros((1, instance.m)), np.cumsum(steps, axis=0)])
    return _normalize(log_prior + cumulative), steps


def _check_prior(instance: Instance, prior: Optional[Sequence[float]]) -> None:
    if prior is None:
        return
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (instance.m,) or not np.allclose(prior, 1.0 / instance.m):
        raise SimulationError("only the uniform prior is supported")


def simulate_run(
    instance: Instance,
    subset: Iterable[int],
    true_theta: int,
    horizon: int,
    rng: np.random.Generator,
    epsilon: Optional[float] = None,
    delta: Optional[float] = None,
    mu_th: Optional[float] = None,
    prior: Optional[Sequence[float]] = None,
) -> SimulationResult:
    """Simulate ``horizon`` observations under ``true_theta`` from the uniform prior.

    ``epsilon`` defaults to half the smallest divergence to a hypothesis
    outside the equivalence class of ``true_theta``.
    """
    _check_prior(instance, prior)
    indices = _likelihood_sources(instance, subset)
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    members = equiv_set(instance, indices, true_theta)
    divergences = divergence_profile(instance, indices, true_theta)
    if epsilon is None and divergences:
        epsilon = min(divergences.values()) / 2.0

    observations = sample_observations(instance, indices, true_theta, rng, horizon)
    log_trajectory, steps = _log_trajectory(instance, indices, observations)
    beliefs = np.exp(log_trajectory)

    L = compute_L(instance)
    if logger.isEnabledFor(logging.DEBUG) and horizon:
        spread = float((steps.max(axis=1) - steps.min(axis=1)).max())
        if spread > len(indices) * L + 1e-9:
            raise SimulationError(f"step log-likelihood ratio {spread} exceeds |I|*L")

    diagnostics = SimulationDiagnostics(
        true_theta=true_theta,
        subset=list(indices),
        horizon=horizon,
        equivalence_class=members.to_list(),
        divergences=divergences,
        epsilon=epsilon,
        L=L,
    )
    if epsilon is not None:
        diagnostics.epsilon_not_below_divergence = [
            q for q, k in divergences.items() if epsilon >= k
        ]
        if diagnostics.epsilon_not_below_divergence:
            logger.warning(
                f"epsilon={epsilon:g} is not below K for {diagnostics.epsilon_not_below_divergence}"
            )
        if delta is not None and L > 0:
            diagnostics.N = sample_complexity_N(delta, epsilon, L)
            if mu_th is not None and divergences:
                k_min = min(abs(k - epsilon) for k in divergences.values())
                diagnostics.N_tilde = sample_complexity_threshold(
                    delta, epsilon, L, mu_th, k_min
                )

    class_members = members.to_list()
    outside = sorted(divergences)
    for t in range(horizon + 1):
        row = beliefs[t]
        diagnostics.in_class_gap.append(
            float(np.max(np.abs(row[class_members] - row[true_theta])))
        )
        if epsilon is not None:
            diagnostics.bound_violations.append(
                [q for q in outside if row[q] > math.exp(-t * abs(divergences[q] - epsilon))]
            )
        if mu_th is not None:
            diagnostics.threshold_exceeded.append(bool(any(row[q] > mu_th for q in outside)))

    return SimulationResult(log_trajectory, observations, diagnostics)


def asymptotic_belief(instance: Instance, subset: Iterable[int], theta_p: int) -> np.ndarray:
    """Limit belief: uniform over F_theta_p(I), zero elsewhere."""
    members = equiv_set(instance, subset, theta_p)
    belief = np.zeros(instance.m)
    belief[members.to_list()] = 1.0 / len(members)
    return belief


def trajectory_frame(result: SimulationResult, labels: Sequence[str]) -> pd.DataFrame:
    """Long-format trajectory with columns t, hypothesis, belief."""
    beliefs = result.beliefs
    steps, m = beliefs.shape
    return pd.DataFrame(
        {
            "t": np.repeat(np.arange(steps), m),
            "hypothesis": np.tile(np.asarray(labels, dtype=object), steps),
            "belief": beliefs.ravel(),
        }
    )


# -- batch statistics -----------------------------------------------------------


class ViolationRates(BaseModel):
    """Fractions of seeded runs violating the finite-sample statements."""

    runs: int
    epsilon: float
    N: int
    N_tilde: int
    kl_deviation_rate: float = Field(
        ..., description="mean log-likelihood ratio off K by more than epsilon at t = N"
    )
    belief_bound_rate: float = Field(
        ..., description="some mu_N(theta_q) above exp(-N|K - epsilon|)"
    )
    threshold_rate: float = Field(
        ..., description="some mu_t(theta_q) above mu_th at t = N_tilde"
    )


def _run_checks(
    instance: Instance,
    indices: Tuple[int, ...],
    true_theta: int,
    divergences: Dict[int, float],
    epsilon: float,
    N: int,
    N_tilde: int,
    mu_th: float,
    rng: np.random.Generator,
) -> Tuple[bool, bool, bool]:
    horizon = max(N, N_tilde)
    observations = sample_observations(instance, indices, true_theta, rng, horizon)
    log_trajectory, steps = _log_trajectory(instance, indices, observations)
    outside = sorted(divergences)
    kl_deviation = False
    bound = False
    for q in outside:
        mean_ratio = float(np.mean(steps[:N, true_theta] - steps[:N, q]))
        if abs(mean_ratio - divergences[q]) > epsilon:
            kl_deviation = True
        if math.exp(log_trajectory[N, q]) > math.exp(-N * abs(divergences[q] - epsilon)):
            bound = True
    threshold = any(math.exp(log_trajectory[N_tilde, q]) > mu_th for q in outside)
    return kl_deviation, bound, threshold


def estimate_violation_rates(
    instance: Instance,
    subset: Iterable[int],
    true_theta: int,
    delta: float,
    mu_th: float,
    epsilon: Optional[float] = None,
    runs: int = 500,
    master_seed: int = 0,
    threads: int = 1,
) -> ViolationRates:
    """Run ``runs`` seeded simulations and measure how often the bounds fail."""
    indices = _likelihood_sources(instance, subset)
    divergences = divergence_profile(instance, indices, true_theta)
    if not divergences:
        raise SimulationError("every hypothesis is equivalent to the true one")
    if epsilon is None:
        epsilon = min(divergences.values()) / 2.0
    L = compute_L(instance)
    N = sample_complexity_N(delta, epsilon, L)
    k_min = min(abs(k - epsilon) for k in divergences.values())
    N_tilde = sample_complexity_threshold(delta, epsilon, L, mu_th, k_min)
    logger.info(f"Estimating violation rates over {runs} runs (N={N}, N~={N_tilde})")

    outcomes = Parallel(n_jobs=threads)(
        delayed(_run_checks)(
            instance,
            indices,
            true_theta,
            divergences,
            epsilon,
            N,
            N_tilde,
            mu_th,
            derive_rng(master_seed, run),
        )
        for run in range(runs)
    )
    flags = np.array(outcomes, dtype=bool).reshape(runs, 3)
    return ViolationRates(
        runs=runs,
        epsilon=epsilon,
        N=N,
        N_tilde=N_tilde,
        kl_deviation_rate=float(flags[:, 0].mean()),
        belief_bound_rate=float(flags[:, 1].mean()),
        threshold_rate=float(flags[:, 2].mean()),
    )
