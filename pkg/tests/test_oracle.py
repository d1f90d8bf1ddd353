import math

import numpy as np
import pytest

from chm.config import SEVEN_ARM_MEANS
from chm.errors import AssumptionError, DomainError, OracleError, QueryError
from chm.exp_family import ExpFamilyModel, bernoulli_kl, kl_div
from chm.oracle import (OracleResult, Query, allocation_gap, brute_force_game, characteristic_time,
                        check_endpoint_assumption, feasibility, lower_bound, two_pass_allocation)


class TestQuery:
    def test_point(self):
        q = Query.point(0.4)
        assert q.is_point
        assert q.finite_endpoints == (0.4,)

    @pytest.mark.parametrize("lo, hi", [
        (0.6, 0.4),
        (-math.inf, math.inf),
        (math.inf, math.inf),
        (math.nan, 0.5),
    ])
    def test_invalid(self, lo, hi):
        with pytest.raises(QueryError):
            Query(lo, hi)

    def test_half_infinite(self):
        q = Query(-math.inf, 0.5)
        assert not q.is_point
        assert q.finite_endpoints == (0.5,)


class TestFeasibility:
    def test_point(self):
        assert feasibility((0.2, 0.8), Query.point(0.5))
        assert not feasibility((0.2, 0.3), Query.point(0.5))

    def test_interval(self):
        assert feasibility((0.2, 0.3), Query(0.25, 0.9))
        assert feasibility((0.3, 0.6), Query(-math.inf, 0.5))
        assert not feasibility((0.6, 0.7), Query(-math.inf, 0.5))
        assert not feasibility((0.1, 0.2), Query(0.5, math.inf))

    def test_mean_on_endpoint(self):
        with pytest.raises(AssumptionError):
            check_endpoint_assumption((0.2, 0.5), Query.point(0.5))
        with pytest.raises(AssumptionError):
            feasibility((0.2, 0.5 + 1e-13), Query.point(0.5))


class TestCharacteristicTime:
    def test_seven_arm_instance_feasible(self, bernoulli):
        result = characteristic_time(bernoulli, SEVEN_ARM_MEANS, Query.point(0.25))
        assert result.feasible
        assert result.gamma_star is None
        np.testing.assert_allclose(result.weights, [0.860, 0, 0, 0, 0, 0, 0.140], atol=1e-3)
        inv = 1.0 / kl_div(bernoulli, 0.1, 0.25) + 1.0 / kl_div(bernoulli, 0.7, 0.25)
        assert result.t_star == pytest.approx(inv)

    def test_seven_arm_instance_infeasible(self, bernoulli):
        result = characteristic_time(bernoulli, SEVEN_ARM_MEANS, Query.point(0.9))
        assert not result.feasible
        assert result.gamma_star == 0.9
        assert np.all(result.weights > 0)
        assert result.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert result.t_star == pytest.approx(np.sum(1.0 / kl_div(bernoulli, np.array(SEVEN_ARM_MEANS), 0.9)))

    def test_half_line_puts_all_weight_on_minimum(self, bernoulli):
        result = characteristic_time(bernoulli, (0.3, 0.6), Query(-math.inf, 0.5))
        assert result.feasible
        np.testing.assert_array_equal(result.weights, [1.0, 0.0])
        assert result.t_star == pytest.approx(1.0 / kl_div(bernoulli, 0.3, 0.5))

    def test_gamma_star_is_closest_endpoint(self, bernoulli):
        result = characteristic_time(bernoulli, (0.1, 0.2), Query(0.3, 0.9))
        assert result.gamma_star == 0.3
        result = characteristic_time(bernoulli, (0.92, 0.95), Query(0.3, 0.9))
        assert result.gamma_star == 0.9

    def test_tied_extremes(self, bernoulli):
        with pytest.raises(AssumptionError):
            characteristic_time(bernoulli, (0.2, 0.2, 0.8), Query.point(0.5))

    def test_single_arm(self, bernoulli):
        result = characteristic_time(bernoulli, (0.9,), Query.point(0.5))
        assert not result.feasible
        np.testing.assert_array_equal(result.weights, [1.0])

    def test_gaussian(self, gaussian):
        result = characteristic_time(gaussian, (-1.0, 1.0), Query.point(0.0))
        assert result.t_star == pytest.approx(4.0)
        np.testing.assert_allclose(result.weights, [0.5, 0.5])

    @pytest.mark.parametrize("query", [Query.point(0.0), Query.point(3.0), Query(-0.5, 0.7), Query(-math.inf, 0.2)],
                             ids=["feasible", "infeasible", "interval", "half-line"])
    @pytest.mark.parametrize("shift", [-4.25, 3.7])
    def test_gaussian_shift_invariance(self, gaussian, query, shift):
        means = np.array([-1.0, 0.5, 2.0])
        moved = Query(query.gamma_minus + shift, query.gamma_plus + shift)
        base = characteristic_time(gaussian, means, query)
        shifted = characteristic_time(gaussian, means + shift, moved)
        assert shifted.feasible == base.feasible
        assert shifted.t_star == pytest.approx(base.t_star, rel=1e-9)
        np.testing.assert_allclose(shifted.weights, base.weights, atol=1e-9)

    def test_equality(self, bernoulli):
        a = characteristic_time(bernoulli, SEVEN_ARM_MEANS, Query.point(0.9))
        b = characteristic_time(bernoulli, SEVEN_ARM_MEANS, Query.point(0.9))
        assert a == b
        assert isinstance(a, OracleResult)


class TestEqualization:
    def test_fuzzed_instances(self, bernoulli):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 100:
            k = int(rng.integers(2, 7))
            means = rng.uniform(0.05, 0.95, size=k)
            gamma = float(rng.uniform(0.05, 0.95))
            if np.min(np.abs(means - gamma)) < 1e-3:
                continue
            q = Query.point(gamma)
            result = characteristic_time(bernoulli, means, q)
            if result.feasible:
                lo, hi = int(np.argmin(means)), int(np.argmax(means))
                products = [result.weights[lo] * kl_div(bernoulli, means[lo], gamma),
                            result.weights[hi] * kl_div(bernoulli, means[hi], gamma)]
            else:
                products = list(result.weights * kl_div(bernoulli, means, result.gamma_star))
            np.testing.assert_allclose(products, 1.0 / result.t_star, rtol=1e-10)
            checked += 1


class TestBruteForce:
    MEANS = (0.2, 0.5, 0.8)

    @pytest.mark.parametrize("query", [Query.point(0.4), Query.point(0.9), Query(0.55, 0.9)],
                             ids=["feasible-point", "infeasible-point", "interval"])
    def test_matches_closed_form(self, bernoulli, query):
        exact = characteristic_time(bernoulli, self.MEANS, query)
        solution = brute_force_game(bernoulli, self.MEANS, query, 200)
        assert 1.0 / solution.value == pytest.approx(exact.t_star, rel=0.02)
        assert solution.weights.sum() == pytest.approx(1.0)

    def test_interval_with_interior_extreme(self, bernoulli):
        # the top arm lies inside (0.55, 0.9) and pays on both sides
        exact = characteristic_time(bernoulli, self.MEANS, Query(0.55, 0.9))
        a_lo, a_hi = kl_div(bernoulli, 0.2, 0.9), kl_div(bernoulli, 0.8, 0.9)
        b_hi = kl_div(bernoulli, 0.8, 0.55)
        w = exact.weights[0]
        value_low = w * a_lo + (1 - w) * a_hi
        value_high = (1 - w) * b_hi
        assert value_low == pytest.approx(value_high, rel=1e-9)
        assert 1.0 / exact.t_star == pytest.approx(min(value_low, value_high), rel=1e-9)
        assert exact.weights[1] == 0.0

    def test_gaussian_point(self, gaussian):
        exact = characteristic_time(gaussian, (-1.0, 0.5, 2.0), Query.point(0.0))
        solution = brute_force_game(gaussian, (-1.0, 0.5, 2.0), Query.point(0.0), 100)
        assert 1.0 / solution.value == pytest.approx(exact.t_star, rel=0.02)

    def test_single_arm(self, bernoulli):
        solution = brute_force_game(bernoulli, (0.5,), Query.point(0.8), 50)
        np.testing.assert_array_equal(solution.weights, [1.0])
        assert solution.value == pytest.approx(bernoulli_kl(0.5, 0.8), rel=1e-12)

    def test_symmetric_gaussian_splits_evenly(self, gaussian):
        solution = brute_force_game(gaussian, (-1.0, 1.0), Query.point(0.0), 100)
        np.testing.assert_allclose(solution.weights, [0.5, 0.5], atol=1e-12)
        exact = characteristic_time(gaussian, (-1.0, 1.0), Query.point(0.0))
        np.testing.assert_allclose(exact.weights, [0.5, 0.5])

    def test_preconditions(self, bernoulli):
        with pytest.raises(OracleError):
            brute_force_game(bernoulli, (0.1, 0.2, 0.3, 0.4, 0.6), Query.point(0.5), 60)
        with pytest.raises(OracleError):
            brute_force_game(bernoulli, self.MEANS, Query.point(0.4), 10)


class TestLowerBound:
    def test_value(self):
        assert lower_bound(10.0, 0.01) == pytest.approx(10.0 * bernoulli_kl(0.01, 0.99))

    def test_known_value(self):
        assert lower_bound(10.0, 0.1) == pytest.approx(17.58, abs=0.01)

    def test_vanishes_near_half(self):
        assert lower_bound(10.0, 0.5 - 1e-9) == pytest.approx(0.0, abs=1e-6)

    def test_log_rate_for_small_delta(self):
        delta = 1e-8
        assert lower_bound(7.0, delta) / math.log(1.0 / delta) == pytest.approx(7.0, rel=0.01)

    def test_grows_as_delta_shrinks(self):
        assert lower_bound(5.0, 0.001) > lower_bound(5.0, 0.01) > lower_bound(5.0, 0.1)

    @pytest.mark.parametrize("delta", [0.0, 0.5, 0.7])
    def test_domain(self, delta):
        with pytest.raises(DomainError):
            lower_bound(1.0, delta)


class TestExtras:
    def test_allocation_gap(self, bernoulli):
        result = characteristic_time(bernoulli, (0.3, 0.6), Query(-math.inf, 0.5))
        assert allocation_gap([0.9, 0.1], result) == pytest.approx(0.1)

    def test_two_pass_allocation_doubles_farthest_arm(self, bernoulli):
        gamma = 0.9
        inv = 1.0 / kl_div(bernoulli, np.array(SEVEN_ARM_MEANS), gamma)
        alloc = two_pass_allocation(bernoulli, SEVEN_ARM_MEANS, gamma)
        assert alloc.sum() == pytest.approx(1.0)
        assert alloc[0] == pytest.approx(2 * inv[0] / (inv.sum() + inv[0]))
        assert alloc[0] > characteristic_time(bernoulli, SEVEN_ARM_MEANS, Query.point(gamma)).weights[0]

    def test_two_pass_allocation_when_first_stage_fails(self, bernoulli):
        alloc = two_pass_allocation(bernoulli, (0.6, 0.7), 0.5)
        inv = 1.0 / kl_div(bernoulli, np.array([0.6, 0.7]), 0.5)
        np.testing.assert_allclose(alloc, inv / inv.sum())
