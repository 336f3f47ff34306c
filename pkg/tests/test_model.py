import math

import numpy as np
import pytest

from penaltyselect.core.model import (
    BackingError,
    HypothesisSet,
    Instance,
    InstanceFormatError,
    ModelError,
    PartitionModel,
    PenaltyMatrix,
    SourceModel,
    compute_L,
    cost_of,
    kl_set,
    kl_set_joint,
    kl_source,
    load_instance,
    save_instance,
    validate,
)

from .conftest import FIXTURES, partition_instance


class TestValidate:
    def test_example1_is_valid(self, example1):
        assert validate(example1) == []

    def test_nonzero_diagonal(self):
        instance = partition_instance(
            [[0.1, 0.4, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]],
            [[[0, 1], [2]]],
            [1],
        )
        assert validate(instance) == ["row 0: nonzero diagonal (0.1)"]

    def test_zero_likelihood(self):
        instance = Instance(
            HypothesisSet(("a", "b")),
            PenaltyMatrix([[0, 1], [1, 0]]),
            [SourceModel(cost=1, likelihood=np.array([[1.0, 0.3], [0.0, 0.7]]))],
        )
        violations = validate(instance)
        assert any("zero likelihood entry" in v for v in violations)

    def test_not_row_stochastic(self):
        instance = partition_instance(
            [[0, 0.4, 0.4], [0.5, 0, 0.5], [0.5, 0.5, 0]], [[[0, 1, 2]]], [1]
        )
        assert any("not row stochastic" in v for v in validate(instance))

    def test_partition_must_cover(self):
        instance = partition_instance(
            [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]], [[[0, 1]]], [1]
        )
        assert validate(instance) == ["source 0: partition does not cover hypotheses [2]"]

    def test_near_equivalent_columns_flagged(self):
        likelihood = np.array([[0.5, 0.5 + 1e-6], [0.5, 0.5 - 1e-6]])
        instance = Instance(
            HypothesisSet(("a", "b")),
            PenaltyMatrix([[0, 1], [1, 0]]),
            [SourceModel(cost=1, likelihood=likelihood)],
        )
        assert any("nearly equivalent" in v for v in validate(instance))

    def test_idempotent(self, unique_instance):
        assert validate(unique_instance) == validate(unique_instance) == []


class TestInstance:
    def test_mixed_backings_rejected(self, bernoulli):
        with pytest.raises(ModelError):
            Instance(
                bernoulli.hypotheses,
                bernoulli.penalties,
                [bernoulli.sources[0], PartitionModel(cost=1, partition=[[0, 1]])],
            )

    def test_needs_a_source(self):
        with pytest.raises(ModelError):
            Instance(HypothesisSet(("a",)), PenaltyMatrix([[0.0]]), [])

    def test_unique_rows(self, example1, unique_instance):
        assert not example1.penalties.unique_rows
        assert unique_instance.penalties.unique_rows


class TestCostOf:
    def test_sum(self, unique_instance):
        assert cost_of(unique_instance, [0, 1]) == 3

    def test_empty(self, unique_instance):
        assert cost_of(unique_instance, []) == 0

    def test_single(self, example1):
        assert cost_of(example1, [1]) == 1

    def test_out_of_range(self, example1):
        with pytest.raises(IndexError):
            cost_of(example1, [2])


class TestKL:
    def test_bernoulli(self, bernoulli):
        assert kl_source(bernoulli, 0, 0, 1) == pytest.approx(0.53406, abs=1e-4)

    def test_asymmetric(self, bernoulli):
        expected = 0.3 * math.log(0.3 / 0.8) + 0.7 * math.log(0.7 / 0.2)
        assert kl_source(bernoulli, 0, 1, 0) == pytest.approx(expected, abs=1e-12)
        assert kl_source(bernoulli, 0, 1, 0) != pytest.approx(kl_source(bernoulli, 0, 0, 1))

    def test_identical_columns(self, bernoulli):
        assert kl_source(bernoulli, 0, 1, 1) == 0

    def test_additive_over_sources(self, two_coins):
        single = kl_source(two_coins, 0, 0, 1)
        assert kl_set(two_coins, [0, 1], 0, 1) == pytest.approx(2 * single, abs=1e-12)
        assert kl_set(two_coins, [], 0, 1) == 0
        assert kl_set(two_coins, [1], 0, 1) == pytest.approx(single)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_joint_space(self, random_likelihood_instance, seed):
        instance = random_likelihood_instance(seed, m=4, n=3)
        subset = [0, 1, 2]
        for p in range(instance.m):
            for q in range(instance.m):
                assert kl_set(instance, subset, p, q) == pytest.approx(
                    kl_set_joint(instance, subset, p, q), abs=1e-9
                )

    def test_partition_backing(self, example1):
        with pytest.raises(BackingError):
            kl_source(example1, 0, 0, 1)


class TestComputeL:
    def test_bernoulli(self, bernoulli):
        assert compute_L(bernoulli) == pytest.approx(1.25276, abs=1e-4)

    def test_indistinguishable(self):
        instance = Instance(
            HypothesisSet(("a", "b", "c")),
            PenaltyMatrix([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]]),
            [SourceModel(cost=1, likelihood=np.full((2, 3), 0.5))],
        )
        assert compute_L(instance) == 0

    def test_monotone_in_sources(self, bernoulli):
        sharper = SourceModel(cost=1, likelihood=np.array([[0.9, 0.1], [0.1, 0.9]]))
        bigger = Instance(bernoulli.hypotheses, bernoulli.penalties, [*bernoulli.sources, sharper])
        assert compute_L(bigger) >= compute_L(bernoulli)

    def test_partition_backing(self, example1):
        with pytest.raises(BackingError):
            compute_L(example1)


class TestInstanceFiles:
    def test_load_example1(self):
        instance = load_instance(FIXTURES / "example1.json")
        assert instance.m == 3
        assert instance.n == 2
        assert instance.backing.value == "partition"
        assert validate(instance) == []

    def test_load_likelihood(self):
        instance = load_instance(FIXTURES / "bernoulli.json")
        assert instance.backing.value == "likelihood"
        assert kl_source(instance, 0, 0, 1) == pytest.approx(0.53406, abs=1e-4)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InstanceFormatError):
            load_instance(tmp_path / "absent.json")

    def test_mixed_backings(self, write_instance):
        path = write_instance(
            {
                "hypotheses": ["a", "b"],
                "penalties": [[0, 1], [1, 0]],
                "sources": [
                    {"cost": 1, "partition": [[0], [1]]},
                    {"cost": 1, "likelihood": [[0.5, 0.5], [0.5, 0.5]]},
                ],
            }
        )
        with pytest.raises(InstanceFormatError):
            load_instance(path)

    def test_renormalize_on_request(self, write_instance):
        path = write_instance(
            {
                "hypotheses": ["a", "b", "c"],
                "penalties": [[0, 1, 1], [1, 0, 3], [2, 2, 0]],
                "sources": [{"cost": 1, "partition": [[0, 1, 2]]}],
            }
        )
        assert validate(load_instance(path)) != []
        instance = load_instance(path, renormalize=True)
        np.testing.assert_allclose(instance.penalties.xi[1], [0.25, 0, 0.75])
        assert validate(instance) == []

    def test_save_and_load(self, tmp_path, unique_instance):
        path = tmp_path / "saved.json"
        save_instance(unique_instance, path)
        loaded = load_instance(path)
        np.testing.assert_array_equal(loaded.penalties.xi, unique_instance.penalties.xi)
        assert loaded.sources[1].partition == ((0, 2), (1,))
        assert loaded.costs.tolist() == [1.0, 2.0]
