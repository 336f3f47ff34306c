import itertools

import pytest

from penaltyselect.core.metrics import (
    Metric,
    coverage_function,
    coverage_z,
    constraints_satisfied,
    g_score,
    gamma_bound,
    gamma_exact,
    gamma_exact_of,
    lambda_score,
    max_penalty_score,
    score_function,
    total_penalty,
    truncated_score,
    utility_function,
)
from penaltyselect.core.model import InstanceTooLargeError, PenaltyMatrix

from .conftest import partition_instance


def subsets(n):
    for size in range(n + 1):
        yield from itertools.combinations(range(n), size)


class TestMaxPenaltyScore:
    def test_empty(self, example1):
        assert max_penalty_score(example1, 0, []) == 0.5

    def test_full(self, example1):
        assert max_penalty_score(example1, 0, [0, 1]) == 1.0

    def test_joint_gain_without_single_gains(self, example1):
        base = max_penalty_score(example1, 0, [])
        assert max_penalty_score(example1, 0, [0]) - base == 0
        assert max_penalty_score(example1, 0, [1]) - base == 0
        assert max_penalty_score(example1, 0, [0, 1]) - base == 0.5


class TestTruncatedScore:
    def test_min_semantics(self, example1):
        assert truncated_score(example1, 0, [], 0.3) == pytest.approx(0.5)

    def test_truncation_active(self, example1):
        assert truncated_score(example1, 0, [0, 1], 0.3) == pytest.approx(0.7)

    def test_full_bound(self, example1):
        assert truncated_score(example1, 0, [0, 1], 1.0) == 0

    def test_bound_range(self, example1):
        with pytest.raises(ValueError):
            truncated_score(example1, 0, [], 1.5)


class TestCoverage:
    def test_example1_empty(self, example1):
        assert coverage_z(example1, [], [0, 0, 0]) == pytest.approx(1.5)

    def test_unique_fixture(self, unique_instance):
        bounds = [0, 0, 0]
        assert coverage_z(unique_instance, [], bounds) == pytest.approx(1.15)
        assert coverage_z(unique_instance, [0], bounds) == pytest.approx(2.3)
        assert coverage_z(unique_instance, [1], bounds) == pytest.approx(1.95)
        assert coverage_z(unique_instance, [0, 1], bounds) == pytest.approx(3.0)

    def test_bounds_length(self, example1):
        with pytest.raises(ValueError):
            coverage_z(example1, [], [0, 0])

    @pytest.mark.parametrize("seed", range(10))
    def test_saturation_iff_constraints(self, random_instance, seed):
        instance = random_instance(seed, m=6, n=5, unique=False)
        bounds = [0.1 * ((seed + p) % 10) for p in range(instance.m)]
        for metric in Metric:
            if not constraints_satisfied(instance, range(instance.n), bounds, metric):
                continue
            z = coverage_function(instance, bounds, metric)
            top = z(instance.full_mask)
            for subset in subsets(instance.n):
                saturated = z.of(subset) >= top - 1e-9
                assert saturated == constraints_satisfied(instance, subset, bounds, metric)


class TestLambda:
    def test_example1(self, example1):
        assert lambda_score(example1, [0]) == pytest.approx(2.0)
        assert lambda_score(example1, [1]) == pytest.approx(2.0)
        assert lambda_score(example1, []) == pytest.approx(1.5)

    def test_upper_bound(self, random_instance):
        instance = random_instance(5, m=7, n=4)
        assert lambda_score(instance, range(instance.n)) <= instance.m + 1e-12


class TestTotalPenalty:
    def test_example1(self, example1):
        assert total_penalty(example1, 0, []) == pytest.approx(1.0)
        assert total_penalty(example1, 0, [0]) == pytest.approx(0.5)
        assert total_penalty(example1, 0, [0, 1]) == 0

    def test_g_score(self, example1):
        assert g_score(example1, 0, []) == pytest.approx(0.0)
        assert g_score(example1, 0, [0]) == pytest.approx(0.5)

    def test_g_marginals(self, example1):
        first = g_score(example1, 0, [0]) - g_score(example1, 0, [])
        later = g_score(example1, 0, [0, 1]) - g_score(example1, 0, [1])
        assert first == pytest.approx(0.5)
        assert later == pytest.approx(0.5)


class TestMonotonicity:
    @pytest.mark.parametrize("seed", range(6))
    def test_all_scores_monotone(self, random_instance, seed):
        instance = random_instance(seed, m=8, n=5, unique=False)
        bounds = [0.3] * instance.m
        functions = [
            utility_function(instance, Metric.MAX_PENALTY),
            utility_function(instance, Metric.TOTAL_PENALTY),
            coverage_function(instance, bounds, Metric.MAX_PENALTY),
            coverage_function(instance, bounds, Metric.TOTAL_PENALTY),
        ] + [score_function(instance, p) for p in range(instance.m)]
        for subset in subsets(instance.n):
            for extra in range(instance.n):
                larger = set(subset) | {extra}
                for function in functions:
                    assert function.of(larger) >= function.of(subset) - 1e-12
                for p in range(instance.m):
                    assert total_penalty(instance, p, larger) <= total_penalty(
                        instance, p, subset
                    ) + 1e-12


class TestGammaBound:
    def test_example1(self, example1):
        assert gamma_bound(example1.penalties).gamma == 0

    def test_spread_rows(self):
        bound = gamma_bound(PenaltyMatrix([[0, 0.2, 0.8], [0.3, 0, 0.7], [0.6, 0.4, 0]]))
        assert bound.xi_min == pytest.approx(0.2)
        assert bound.xi_max == pytest.approx(0.8)
        assert bound.gamma == pytest.approx(0.25)

    def test_two_hypotheses(self):
        bound = gamma_bound(PenaltyMatrix([[0, 1], [1, 0]]))
        assert (bound.xi_min, bound.xi_max, bound.gamma) == (1, 1, 1)

    def test_zero_off_diagonal_penalty(self):
        assert gamma_bound(PenaltyMatrix([[0, 0, 1], [0.5, 0, 0.5], [1, 0, 0]])).gamma == 0

    def test_needs_two_hypotheses(self):
        with pytest.raises(ValueError):
            gamma_bound(PenaltyMatrix([[0.0]]))


class TestGammaExact:
    def test_example1_is_zero(self, example1):
        assert gamma_exact_of(example1, "f", theta=0) == 0

    def test_unique_fixture_between_bound_and_one(self, unique_instance):
        exact = gamma_exact_of(unique_instance, "f", theta=0)
        assert gamma_bound(unique_instance.penalties).gamma - 1e-9 <= exact <= 1

    @pytest.mark.parametrize("seed", range(100))
    def test_penalty_gap_bound_is_a_lower_bound(self, random_instance, seed):
        m = 2 + seed % 5
        n = 1 + seed % 5
        instance = random_instance(seed, m=m, n=n, unique=True)
        bound = gamma_bound(instance.penalties).gamma
        for p in range(instance.m):
            assert gamma_exact(instance, score_function(instance, p)) >= bound - 1e-9

    @pytest.mark.parametrize("seed", range(100))
    def test_total_penalty_score_is_submodular(self, random_instance, seed):
        instance = random_instance(seed, m=3 + seed % 6, n=1 + seed % 6, unique=seed % 2 == 0)
        for p in range(instance.m):
            assert gamma_exact_of(instance, "g", theta=p) == 1.0

    def test_too_many_sources(self, random_instance):
        instance = random_instance(0, m=3, n=13)
        with pytest.raises(InstanceTooLargeError):
            gamma_exact_of(instance, "lambda")

    def test_unknown_kind(self, example1):
        with pytest.raises(ValueError):
            gamma_exact_of(example1, "h")


class TestSmallInstances:
    def test_single_hypothesis_scores(self):
        instance = partition_instance([[0.0]], [[[0]]], [1])
        assert max_penalty_score(instance, 0, []) == 1.0
        assert total_penalty(instance, 0, [0]) == 0
