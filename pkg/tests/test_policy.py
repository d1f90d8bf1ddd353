import logging
import math

import numpy as np
import pytest

from chm.errors import DomainError, QueryError
from chm.exp_family import PosteriorState, posterior_sample_batch, reward_sample
from chm.oracle import Query
from chm.policy import (PolicyConfig, PolicyKind, ThompsonCHMPolicy, TwoPassPolicy, UniformPolicy,
                        compute_beta, conditional_sample, feasibility_margin, get_policy,
                        thompson_chm_step)
from chm.state import BanditInstance, RunState
from chm.stopping import Decision, StopConfig
from chm.watchdog import watchdog


def concentrated(model, means, strength=10000.0):
    means = np.asarray(means, dtype=float)
    return PosteriorState(model, means * strength, (1.0 - means) * strength)


class TestPolicyConfig:
    def test_defaults(self):
        cfg = PolicyConfig()
        assert cfg.kind is PolicyKind.THOMPSON_CHM
        assert cfg.rejection_cap == 100_000
        assert cfg.epsilon_kl == 1e-12

    def test_kind_from_string(self):
        assert PolicyConfig("two-pass").kind is PolicyKind.TWO_PASS

    def test_rejects_zero_cap(self):
        with pytest.raises(DomainError):
            PolicyConfig(rejection_cap=0)


class TestConditionalSample:
    def test_feasible_posterior_accepts_first_draw(self, bernoulli, rng):
        post = concentrated(bernoulli, [0.1, 0.9])
        draw = conditional_sample(post, Query.point(0.5), 100, rng)
        assert draw.rejections == 0
        assert not draw.saturated

    def test_single_arm_saturates(self, bernoulli, rng):
        post = concentrated(bernoulli, [0.9])
        draw = conditional_sample(post, Query.point(0.5), 50, rng)
        assert draw.saturated
        assert draw.rejections == 50
        assert draw.theta.shape == (1,)
        assert feasibility_margin(draw.theta, Query.point(0.5))[0] < 0

    def test_saturation_logged_at_debug(self, bernoulli, rng, caplog):
        watchdog.logger.addHandler(caplog.handler)
        try:
            conditional_sample(concentrated(bernoulli, [0.9]), Query.point(0.5), 20, rng)
            conditional_sample(concentrated(bernoulli, [0.1, 0.9]), Query.point(0.5), 20, rng)
        finally:
            watchdog.logger.removeHandler(caplog.handler)
        saturated = [r for r in caplog.records if "saturated" in r.getMessage()]
        assert len(saturated) == 1
        assert saturated[0].levelno == logging.DEBUG
        assert saturated[0].name == "chm.policy"
        assert "20 draws" in saturated[0].getMessage()

    def test_saturated_draw_has_max_margin(self, bernoulli):
        post = concentrated(bernoulli, [0.7, 0.8], strength=200.0)
        q = Query.point(0.9)
        draw = conditional_sample(post, q, 300, np.random.default_rng(5))
        if draw.saturated:
            replay = np.random.default_rng(5)
            seen = []
            for size in (1, 4, 16, 64, 215):
                seen.append(posterior_sample_batch(post, replay, size))
            best = np.max(feasibility_margin(np.vstack(seen), q))
            assert feasibility_margin(draw.theta, q)[0] == pytest.approx(best)

    def test_accepted_draws_are_feasible(self, bernoulli, rng):
        post = PosteriorState.from_prior(bernoulli, 3)
        q = Query(0.2, 0.3)
        for _ in range(2000):
            draw = conditional_sample(post, q, 1000, rng)
            assert not draw.saturated
            assert draw.theta.min() < q.gamma_plus and draw.theta.max() > q.gamma_minus


class TestComputeBeta:
    def test_lower_half_line(self, bernoulli):
        assert compute_beta(np.array([0.2, 0.7]), Query(-math.inf, 0.5), bernoulli, 1e-12) == 1.0

    def test_upper_half_line(self, bernoulli):
        assert compute_beta(np.array([0.2, 0.7]), Query(0.5, math.inf), bernoulli, 1e-12) == 0.0

    def test_symmetric_gaussian(self, gaussian):
        assert compute_beta(np.array([-1.0, 1.0]), Query.point(0.0), gaussian, 1e-12) == pytest.approx(0.5)

    def test_floor_keeps_beta_finite(self, gaussian):
        beta = compute_beta(np.array([0.0, 0.0]), Query.point(0.0), gaussian, 1e-12)
        assert beta == pytest.approx(0.5)

    def test_in_unit_interval(self, bernoulli, rng):
        q = Query(0.3, 0.6)
        for theta in rng.uniform(0.01, 0.99, size=(500, 4)):
            assert 0.0 <= compute_beta(theta, q, bernoulli, 1e-12) <= 1.0

    def test_closer_minimum_favours_argmin(self, bernoulli):
        # min theta sits just below gamma: the cheap side to confirm is the low one
        beta = compute_beta(np.array([0.45, 0.9]), Query.point(0.5), bernoulli, 1e-12)
        assert beta > 0.5

    def test_empty_theta(self, bernoulli):
        with pytest.raises(DomainError):
            compute_beta(np.array([]), Query.point(0.5), bernoulli, 1e-12)


class TestThompsonStep:
    def test_arm_matches_coin(self, bernoulli, rng):
        post = PosteriorState.from_prior(bernoulli, 4)
        cfg = PolicyConfig(rejection_cap=1000)
        coins = set()
        for _ in range(300):
            step = thompson_chm_step(post, Query.point(0.5), cfg, rng)
            expected = np.argmin(step.theta) if step.coin == 1 else np.argmax(step.theta)
            assert step.arm == expected
            assert 0.0 <= step.beta_t <= 1.0
            assert step.rejections <= cfg.rejection_cap
            coins.add(step.coin)
        assert coins == {0, 1}

    def test_single_arm(self, bernoulli, rng):
        post = PosteriorState.from_prior(bernoulli, 1)
        step = thompson_chm_step(post, Query.point(0.5), PolicyConfig(rejection_cap=10), rng)
        assert step.arm == 0
        assert step.saturated

    def test_murphy_reduction(self, bernoulli, rng):
        post = PosteriorState.from_prior(bernoulli, 3)
        for _ in range(200):
            step = thompson_chm_step(post, Query(-math.inf, 0.5), PolicyConfig(rejection_cap=1000), rng)
            assert step.beta_t == 1.0
            assert step.arm == np.argmin(step.theta)

    def test_thresholding_reduction(self, bernoulli, rng):
        post = PosteriorState.from_prior(bernoulli, 3)
        for _ in range(200):
            step = thompson_chm_step(post, Query(0.5, math.inf), PolicyConfig(rejection_cap=1000), rng)
            assert step.beta_t == 0.0
            assert step.arm == np.argmax(step.theta)


class TestPolicies:
    def test_factory(self, seven_arm_instance):
        stop = StopConfig(0.1)
        assert isinstance(get_policy(seven_arm_instance, stop, PolicyConfig("thompson-chm")), ThompsonCHMPolicy)
        assert isinstance(get_policy(seven_arm_instance, stop, PolicyConfig("uniform")), UniformPolicy)
        assert isinstance(get_policy(seven_arm_instance, stop, PolicyConfig("two-pass")), TwoPassPolicy)

    def test_uniform_round_robin(self, seven_arm_instance, bernoulli, rng):
        policy = UniformPolicy(seven_arm_instance, StopConfig(0.1), PolicyConfig("uniform"))
        state = RunState.fresh(bernoulli, seven_arm_instance.num_arms)
        arms = []
        for _ in range(14):
            arm = policy.select_arm(state, rng).arm
            arms.append(arm)
            policy.observe(state, arm, 1.0)
        assert arms == list(range(7)) * 2

    def test_two_pass_rejects_interval(self, bernoulli):
        instance = BanditInstance(bernoulli, (0.2, 0.8), Query(0.3, 0.6))
        with pytest.raises(QueryError):
            TwoPassPolicy(instance, StopConfig(0.1), PolicyConfig("two-pass"))

    def test_two_pass_splits_delta(self, bernoulli):
        instance = BanditInstance(bernoulli, (0.2, 0.8), Query.point(0.5))
        policy = TwoPassPolicy(instance, StopConfig(0.1), PolicyConfig("two-pass"))
        assert policy.stage_stop.delta == pytest.approx(0.05)
        assert policy.stage_queries == (Query(-math.inf, 0.5), Query(0.5, math.inf))

    def _drive(self, instance, rng, max_steps=20000):
        policy = TwoPassPolicy(instance, StopConfig(0.1), PolicyConfig("two-pass", rejection_cap=1000))
        state = RunState.fresh(instance.model, instance.num_arms)
        while state.t < max_steps:
            outcome = policy.check_stop(state)
            if outcome.stopped:
                return policy, state, outcome
            arm = policy.select_arm(state, rng).arm
            policy.observe(state, arm, reward_sample(instance.model, instance.means[arm], rng))
        raise AssertionError("two-pass did not stop")

    def test_two_pass_feasible_uses_both_stages(self, bernoulli, rng):
        instance = BanditInstance(bernoulli, (0.2, 0.8), Query.point(0.5))
        policy, state, outcome = self._drive(instance, rng)
        assert outcome.decision is Decision.FEASIBLE
        assert len(policy.stage_outcomes) == 2
        assert sum(policy.stage_lengths) == state.t

    def test_two_pass_stops_after_failed_first_stage(self, bernoulli, rng):
        instance = BanditInstance(bernoulli, (0.6, 0.7), Query.point(0.5))
        policy, state, outcome = self._drive(instance, rng)
        assert outcome.decision is Decision.INFEASIBLE
        assert len(policy.stage_outcomes) == 1
        assert policy.stage_lengths == [state.t]
