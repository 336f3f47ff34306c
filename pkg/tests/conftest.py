"""Shared fixtures: the three-hypothesis instances, a Bernoulli source and random factories."""

import json
from pathlib import Path

import numpy as np
import pytest

from penaltyselect.core.model import (
    HypothesisSet,
    Instance,
    PartitionModel,
    PenaltyMatrix,
    SourceModel,
    instance_to_document,
)
from penaltyselect.experiments.generators import random_partitions, random_penalty_matrix

FIXTURES = Path(__file__).parent / "fixtures"

LABELS = ("theta1", "theta2", "theta3")


def partition_instance(xi, partitions, costs):
    sources = [PartitionModel(cost=c, partition=p) for c, p in zip(costs, partitions)]
    labels = tuple(f"theta{p + 1}" for p in range(len(xi)))
    return Instance(HypothesisSet(labels), PenaltyMatrix(xi), sources)


@pytest.fixture
def example1() -> Instance:
    """Equal penalties; source 0 merges theta1/theta2, source 1 merges theta1/theta3."""
    return partition_instance(
        [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]],
        [[[0, 1], [2]], [[0, 2], [1]]],
        [1, 1],
    )


@pytest.fixture
def unique_instance() -> Instance:
    return partition_instance(
        [[0, 0.4, 0.6], [0.3, 0, 0.7], [0.45, 0.55, 0]],
        [[[0, 1], [2]], [[0, 2], [1]]],
        [1, 2],
    )


@pytest.fixture
def bernoulli() -> Instance:
    """One coin-flip source: heads with 0.8 under h0 and 0.3 under h1."""
    return Instance(
        HypothesisSet(("h0", "h1")),
        PenaltyMatrix([[0, 1], [1, 0]]),
        [SourceModel(cost=1, likelihood=np.array([[0.8, 0.3], [0.2, 0.7]]))],
    )


@pytest.fixture
def two_coins() -> Instance:
    coin = np.array([[0.8, 0.3], [0.2, 0.7]])
    return Instance(
        HypothesisSet(("h0", "h1")),
        PenaltyMatrix([[0, 1], [1, 0]]),
        [SourceModel(cost=1, likelihood=coin), SourceModel(cost=2, likelihood=coin)],
    )


@pytest.fixture
def write_instance(tmp_path):
    """Write an Instance (or a raw document dict) to a JSON file and return its path."""

    def _write(instance, name="instance.json"):
        path = tmp_path / name
        if isinstance(instance, Instance):
            path.write_text(instance_to_document(instance).model_dump_json())
        else:
            path.write_text(json.dumps(instance))
        return path

    return _write


@pytest.fixture
def random_instance():
    """Factory for seeded partition-backed instances."""

    def _make(seed, m, n, unique=True, unit_costs=False):
        rng = np.random.default_rng(seed)
        penalties = random_penalty_matrix(m, unique, rng)
        costs = np.ones(n) if unit_costs else rng.integers(1, 11, size=n).astype(float)
        sources = random_partitions(m, n, rng, costs=costs.tolist())
        labels = tuple(f"h{p}" for p in range(m))
        return Instance(HypothesisSet(labels), penalties, sources)

    return _make


@pytest.fixture
def random_likelihood_instance():
    """Factory for seeded likelihood-backed instances with some repeated columns."""

    def _make(seed, m, n, symbols=3):
        rng = np.random.default_rng(seed)
        sources = []
        for _ in range(n):
            distinct = rng.dirichlet(np.ones(symbols), size=max(1, m // 2)).T
            columns = rng.integers(0, distinct.shape[1], size=m)
            cost = float(rng.integers(1, 5))
            sources.append(SourceModel(cost=cost, likelihood=distinct[:, columns]))
        penalties = random_penalty_matrix(m, True, rng) if m >= 2 else PenaltyMatrix([[0.0]])
        labels = tuple(f"h{p}" for p in range(m))
        return Instance(HypothesisSet(labels), penalties, sources)

    return _make
