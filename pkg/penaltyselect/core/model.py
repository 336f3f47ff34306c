"""Core data model: hypotheses, penalty matrices, information sources and instances.

An instance holds either likelihood-backed sources (finite observation
spaces with known per-hypothesis likelihoods) or partition-backed sources
(the observational equivalence classes of each source given directly).
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..utils.helpers import mask_of

logger = logging.getLogger(__name__)

DEFAULT_TAU_EQ = 1e-9
DEFAULT_SUM_TOLERANCE = 1e-9
NEAR_EQUIVALENCE_FACTOR = 10.0
MAX_JOINT_OBSERVATIONS = 10**6


class ModelError(Exception):
    """Base exception for model errors."""

    pass


class InstanceFormatError(ModelError):
    """The instance document cannot be read or parsed."""

    pass


class BackingError(ModelError):
    """The operation needs the other kind of source backing."""

    pass


class InstanceTooLargeError(ModelError):
    """The instance exceeds an exhaustive-enumeration limit."""

    pass


class Backing(str, Enum):
    LIKELIHOOD = "likelihood"
    PARTITION = "partition"


@dataclass(frozen=True)
class HypothesisSet:
    """Ordered hypothesis labels; index 0..m-1."""

    labels: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def m(self) -> int:
        return len(self.labels)

    def index_of(self, key: Union[int, str]) -> int:
        """Resolve a label or an index (given as int or digit string)."""
        if isinstance(key, int):
            if not 0 <= key < self.m:
                raise IndexError(f"hypothesis index {key} out of range 0..{self.m - 1}")
            return key
        if key in self.labels:
            return self.labels.index(key)
        if key.isdigit():
            return self.index_of(int(key))
        raise KeyError(f"unknown hypothesis {key!r}")


class PenaltyMatrix:
    """Row-stochastic misclassification penalties with zero diagonal.

    ``xi[p, q]`` is the penalty for predicting hypothesis q when p is true.
    Invariants are checked by :func:`validate`, not on construction.
    """

    def __init__(self, xi: Union[np.ndarray, Sequence[Sequence[float]]]):
        array = np.array(xi, dtype=float)
        if array.ndim != 2:
            raise ModelError(f"penalty matrix must be 2-D, got shape {array.shape}")
        array.setflags(write=False)
        self.xi = array

    @property
    def m(self) -> int:
        return self.xi.shape[0]

    @property
    def unique_rows(self) -> bool:
        """True iff every row has pairwise distinct entries, diagonal included."""
        for row in self.xi:
            if len(np.unique(row)) != len(row):
                return False
        return True

    def renormalized(self) -> "PenaltyMatrix":
        sums = self.xi.sum(axis=1, keepdims=True)
        sums[sums == 0] = 1.0
        return PenaltyMatrix(self.xi / sums)

    def __repr__(self) -> str:
        return f"PenaltyMatrix(m={self.m})"


@dataclass(frozen=True, eq=False)
class SourceModel:
    """Source with a finite observation space and likelihood table ``[o, theta]``."""

    cost: float
    likelihood: np.ndarray

    def __post_init__(self):
        table = np.array(self.likelihood, dtype=float)
        if table.ndim != 2:
            raise ModelError(f"likelihood table must be 2-D, got shape {table.shape}")
        table.setflags(write=False)
        object.__setattr__(self, "likelihood", table)
        object.__setattr__(self, "cost", float(self.cost))

    @property
    def observation_space_size(self) -> int:
        return self.likelihood.shape[0]

    @cached_property
    def log_likelihood(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            table = np.log(self.likelihood)
        table.setflags(write=False)
        return table

    @cached_property
    def kl_matrix(self) -> np.ndarray:
        """``kl[p, q] = KL(l(.|p) || l(.|q))``; exactly 0 for identical columns."""
        logs = self.log_likelihood
        diff = logs[:, :, None] - logs[:, None, :]
        with np.errstate(invalid="ignore"):
            kl = np.einsum("op,opq->pq", self.likelihood, diff)
        kl.setflags(write=False)
        return kl


@dataclass(frozen=True, eq=False)
class PartitionModel:
    """Source described by the partition of hypotheses into equivalence blocks."""

    cost: float
    partition: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(h) for h in block)) for block in self.partition)
        object.__setattr__(self, "partition", blocks)
        object.__setattr__(self, "cost", float(self.cost))

    def block_of(self, theta: int) -> Tuple[int, ...]:
        for block in self.partition:
            if theta in block:
                return block
        raise ModelError(f"hypothesis {theta} is not covered by the partition")


Source = Union[SourceModel, PartitionModel]


class Instance:
    """Hypotheses, penalties and a homogeneous list of information sources.

    Instances are immutable; derived tables are computed once on first use.
    """

    def __init__(
        self,
        hypotheses: HypothesisSet,
        penalties: PenaltyMatrix,
        sources: Sequence[Source],
        tau_eq: float = DEFAULT_TAU_EQ,
    ):
        if not sources:
            raise ModelError("an instance needs at least one information source")
        kinds = {type(source) for source in sources}
        if len(kinds) > 1:
            raise ModelError("sources mix likelihood and partition backings")
        self.hypotheses = hypotheses
        self.penalties = penalties
        self.sources: Tuple[Source, ...] = tuple(sources)
        self.backing = (
            Backing.LIKELIHOOD if isinstance(sources[0], SourceModel) else Backing.PARTITION
        )
        self.tau_eq = float(tau_eq)

    @property
    def m(self) -> int:
        return self.hypotheses.m

    @property
    def n(self) -> int:
        return len(self.sources)

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    @property
    def full_hypothesis_mask(self) -> int:
        return (1 << self.m) - 1

    @cached_property
    def costs(self) -> np.ndarray:
        costs = np.array([source.cost for source in self.sources], dtype=float)
        costs.setflags(write=False)
        return costs

    @cached_property
    def source_masks(self) -> Tuple[Tuple[int, ...], ...]:
        """``source_masks[i][theta]`` is the bitmask of F_theta(i)."""
        table = []
        for source in self.sources:
            if isinstance(source, SourceModel):
                kl = source.kl_matrix
                # F_theta(i) = {q : KL(l(.|q) || l(.|theta)) <= tau_eq}
                row = tuple(
                    mask_of(np.flatnonzero(kl[:, theta] <= self.tau_eq).tolist())
                    for theta in range(self.m)
                )
            else:
                row = tuple(mask_of(source.block_of(theta)) for theta in range(self.m))
            table.append(row)
        logger.debug(f"Equivalence masks cached for {self.n} sources, m={self.m}")
        return tuple(table)

    def require_likelihood(self, operation: str) -> None:
        if self.backing is not Backing.LIKELIHOOD:
            raise BackingError(f"{operation} requires likelihood-backed sources")

    def subset_mask(self, subset: Iterable[int]) -> int:
        """Validate source indices and return their bitmask."""
        indices = list(subset)
        for index in indices:
            if not 0 <= index < self.n:
                raise IndexError(f"source index {index} out of range 0..{self.n - 1}")
        return mask_of(indices)

    def __repr__(self) -> str:
        return f"Instance(m={self.m}, n={self.n}, backing={self.backing.value})"


def validate(
    instance: Instance,
    row_tolerance: float = DEFAULT_SUM_TOLERANCE,
    likelihood_tolerance: float = DEFAULT_SUM_TOLERANCE,
) -> List[str]:
    """Human-readable descriptions of every violated invariant; empty when valid."""
    violations: List[str] = []
    m = instance.m
    labels = instance.hypotheses.labels

    if m < 1:
        violations.append("at least one hypothesis is required")
    if len(set(labels)) != len(labels):
        violations.append("hypothesis labels are not unique")

    xi = instance.penalties.xi
    if xi.shape != (m, m):
        violations.append(f"penalty matrix has shape {xi.shape}, expected ({m}, {m})")
    else:
        for p in range(m):
            if xi[p, p] != 0:
                violations.append(f"row {p}: nonzero diagonal ({xi[p, p]:g})")
            if np.any(xi[p] < 0) or np.any(xi[p] > 1):
                violations.append(f"row {p}: penalty outside [0, 1]")
            row_sum = float(xi[p].sum())
            if abs(row_sum - 1.0) > row_tolerance:
                violations.append(f"row {p}: not row stochastic (sum={row_sum:.12g})")

    for i, source in enumerate(instance.sources):
        if not np.isfinite(source.cost) or source.cost < 0:
            violations.append(f"source {i}: cost must be nonnegative, got {source.cost:g}")
        if isinstance(source, SourceModel):
            violations.extend(
                _likelihood_violations(i, source, m, likelihood_tolerance, instance.tau_eq)
            )
        else:
            violations.extend(_partition_violations(i, source, m))

    return violations


def _likelihood_violations(
    i: int, source: SourceModel, m: int, tolerance: float, tau_eq: float
) -> List[str]:
    table = source.likelihood
    if table.shape[1] != m or table.shape[0] < 1:
        return [f"source {i}: likelihood table has shape {table.shape}, expected (|O|, {m})"]
    out = []
    if np.any(table <= 0):
        out.append(f"source {i}: zero likelihood entry")
    for theta, column_sum in enumerate(table.sum(axis=0)):
        if abs(column_sum - 1.0) > tolerance:
            out.append(
                f"source {i}: likelihood column {theta} sums to {column_sum:.12g}"
            )
    if out:
        return out
    kl = source.kl_matrix
    nonzero = kl[kl > 0]
    if nonzero.size and nonzero.min() < NEAR_EQUIVALENCE_FACTOR * tau_eq:
        p, q = np.argwhere((kl > 0) & (kl == nonzero.min()))[0]
        out.append(
            f"source {i}: hypotheses {p} and {q} are nearly equivalent "
            f"(KL={nonzero.min():.3g} < {NEAR_EQUIVALENCE_FACTOR:g}*tau_eq)"
        )
    return out


def _partition_violations(i: int, source: PartitionModel, m: int) -> List[str]:
    seen: dict = {}
    out = []
    for block in source.partition:
        if not block:
            out.append(f"source {i}: empty partition block")
        for h in block:
            if not 0 <= h < m:
                out.append(f"source {i}: hypothesis index {h} out of range")
            elif h in seen:
                out.append(f"source {i}: hypothesis {h} appears in two blocks")
            seen[h] = True
    missing = [h for h in range(m) if h not in seen]
    if missing:
        out.append(f"source {i}: partition does not cover hypotheses {missing}")
    return out


def cost_of(instance: Instance, subset: Iterable[int]) -> float:
    """Total selection cost c(I); 0 for the empty set."""
    indices = list(subset)
    instance.subset_mask(indices)
    return float(sum(instance.costs[i] for i in set(indices)))


def kl_source(instance: Instance, source: int, theta_p: int, theta_q: int) -> float:
    """KL divergence between the likelihoods of ``source`` under two hypotheses."""
    instance.require_likelihood("kl_source")
    model = instance.sources[source]
    return max(0.0, float(model.kl_matrix[theta_p, theta_q]))


def kl_set(instance: Instance, subset: Iterable[int], theta_p: int, theta_q: int) -> float:
    """KL divergence of the joint likelihood; additive over independent sources."""
    instance.require_likelihood("kl_set")
    indices = sorted(set(subset))
    instance.subset_mask(indices)
    return float(sum(kl_source(instance, i, theta_p, theta_q) for i in indices))


def joint_likelihood(instance: Instance, subset: Sequence[int], theta: int) -> np.ndarray:
    """Product likelihood over the joint observation space, flattened in C order."""
    instance.require_likelihood("joint_likelihood")
    indices = sorted(set(subset))
    size = int(np.prod([instance.sources[i].observation_space_size for i in indices]))
    if size > MAX_JOINT_OBSERVATIONS:
        raise InstanceTooLargeError(f"joint observation space of size {size} is too large")
    joint = np.ones(1)
    for i in indices:
        joint = np.multiply.outer(joint, instance.sources[i].likelihood[:, theta]).ravel()
    return joint


def kl_set_joint(instance: Instance, subset: Sequence[int], theta_p: int, theta_q: int) -> float:
    """KL evaluated directly over the product observation space."""
    lp = joint_likelihood(instance, subset, theta_p)
    lq = joint_likelihood(instance, subset, theta_q)
    return float(np.sum(lp * (np.log(lp) - np.log(lq))))


def compute_L(instance: Instance) -> float:
    """Tight bound on |ln(l_i(o|p) / l_i(o|q))| over sources, observations and pairs."""
    instance.require_likelihood("compute_L")
    bound = 0.0
    for source in instance.sources:
        # per observation, the largest ratio is between the extreme columns
        logs = source.log_likelihood
        spread = logs.max(axis=1) - logs.min(axis=1)
        bound = max(bound, float(spread.max()))
    return bound


# -- instance files -----------------------------------------------------------


class SourceDocument(BaseModel):
    """One source entry of an instance file."""

    cost: float = Field(..., description="Selection cost of the source")
    likelihood: Optional[List[List[float]]] = Field(
        default=None, description="Likelihood table, one row per observation symbol"
    )
    partition: Optional[List[List[int]]] = Field(
        default=None, description="Blocks of observationally equivalent hypotheses"
    )

    @model_validator(mode="after")
    def _one_backing(self) -> "SourceDocument":
        if (self.likelihood is None) == (self.partition is None):
            raise ValueError("a source needs exactly one of 'likelihood' or 'partition'")
        return self


class InstanceDocument(BaseModel):
    """JSON schema of an instance file."""

    hypotheses: List[str] = Field(..., min_length=1)
    penalties: List[List[float]]
    sources: List[SourceDocument] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _homogeneous(self) -> "InstanceDocument":
        kinds = {source.likelihood is not None for source in self.sources}
        if len(kinds) > 1:
            raise ValueError("sources mix likelihood and partition backings")
        return self


def instance_from_document(
    document: InstanceDocument, renormalize: bool = False, tau_eq: float = DEFAULT_TAU_EQ
) -> Instance:
    penalties = PenaltyMatrix(document.penalties)
    if renormalize:
        logger.info("Renormalizing penalty rows on request")
        penalties = penalties.renormalized()
    sources: List[Source] = []
    for entry in document.sources:
        if entry.likelihood is not None:
            sources.append(SourceModel(cost=entry.cost, likelihood=np.array(entry.likelihood)))
        else:
            sources.append(PartitionModel(cost=entry.cost, partition=entry.partition))
    return Instance(HypothesisSet(tuple(document.hypotheses)), penalties, sources, tau_eq)


def instance_to_document(instance: Instance) -> InstanceDocument:
    sources = []
    for source in instance.sources:
        if isinstance(source, SourceModel):
            sources.append(
                SourceDocument(cost=source.cost, likelihood=source.likelihood.tolist())
            )
        else:
            sources.append(
                SourceDocument(
                    cost=source.cost, partition=[list(block) for block in source.partition]
                )
            )
    return InstanceDocument(
        hypotheses=list(instance.hypotheses.labels),
        penalties=instance.penalties.xi.tolist(),
        sources=sources,
    )


def load_instance(
    path: Union[str, Path], renormalize: bool = False, tau_eq: float = DEFAULT_TAU_EQ
) -> Instance:
    """Read an instance JSON file."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
        document = InstanceDocument.model_validate(data)
        instance = instance_from_document(document, renormalize=renormalize, tau_eq=tau_eq)
    except (OSError, json.JSONDecodeError, ValidationError, ModelError) as e:
        raise InstanceFormatError(f"Failed to load instance {path}: {e}")
    logger.info(f"Loaded {instance!r} from {path}")
    return instance


def save_instance(instance: Instance, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        f.write(instance_to_document(instance).model_dump_json(indent=2, exclude_none=True))
