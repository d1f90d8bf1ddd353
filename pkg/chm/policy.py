"""
Arm-selection rules.

- ThompsonCHMPolicy: sample the posterior conditioned on the query being
  feasible, then play the sample's argmin with probability beta_t and its
  argmax otherwise.
- UniformPolicy: round-robin baseline.
- TwoPassPolicy: the naive baseline that first decides min mu < gamma and,
  only if that holds, max mu > gamma, each with risk delta / 2.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from chm.errors import DomainError, QueryError
from chm.exp_family import ExpFamilyModel, PosteriorState, kl_div, posterior_sample_batch
from chm.oracle import Query
from chm.state import BanditInstance, RunState
from chm.stopping import NOT_STOPPED, Decision, StopConfig, StopOutcome, check_stop

logger = logging.getLogger(__name__)

MAX_REJECTION_BATCH = 4096


class PolicyKind(str, Enum):
    THOMPSON_CHM = "thompson-chm"
    UNIFORM = "uniform"
    TWO_PASS = "two-pass"


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.THOMPSON_CHM
    rejection_cap: int = 100_000
    epsilon_kl: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if int(self.rejection_cap) < 1:
            raise DomainError(f"rejection_cap must be at least 1, got {self.rejection_cap}")
        if not self.epsilon_kl > 0:
            raise DomainError(f"epsilon_kl must be positive, got {self.epsilon_kl}")


@dataclass(frozen=True)
class StepTrace:
    arm: int
    theta: Optional[np.ndarray] = None
    beta_t: float = math.nan
    coin: Optional[int] = None
    rejections: int = 0
    saturated: bool = False


@dataclass(frozen=True)
class ConditionalDraw:
    theta: np.ndarray
    rejections: int
    saturated: bool


def feasibility_margin(thetas: np.ndarray, q: Query) -> np.ndarray:
    """min(gamma_plus - min theta, max theta - gamma_minus) per row; > 0 iff feasible."""
    thetas = np.atleast_2d(thetas)
    return np.minimum(q.gamma_plus - thetas.min(axis=1), thetas.max(axis=1) - q.gamma_minus)


def conditional_sample(post: PosteriorState, q: Query, cap: int, rng: np.random.Generator) -> ConditionalDraw:
    """
    Draw from the posterior conditioned on min theta < gamma_plus and max theta > gamma_minus.

    Rejection sampling with at most `cap` draws, taken in growing batches.
    When every draw is rejected the draw with the largest feasibility margin
    is returned and the result is flagged saturated.
    """
    drawn = 0
    batch = 1
    best_theta, best_margin = None, -math.inf
    while drawn < cap:
        size = min(batch, cap - drawn)
        thetas = posterior_sample_batch(post, rng, size)
        margins = feasibility_margin(thetas, q)
        accepted = np.flatnonzero(margins > 0.0)
        if accepted.size:
            first = int(accepted[0])
            return ConditionalDraw(thetas[first], drawn + first, False)
        j = int(np.argmax(margins))
        if margins[j] > best_margin:
            best_theta, best_margin = thetas[j], float(margins[j])
        drawn += size
        batch = min(batch * 4, MAX_REJECTION_BATCH)
    logger.debug("rejection sampling saturated after %d draws on %s, best margin %.3g",
                 cap, q.describe(), best_margin)
    return ConditionalDraw(best_theta, cap, True)


def _reciprocal(d: float) -> float:
    return 0.0 if math.isinf(d) else 1.0 / d


def compute_beta(theta: np.ndarray, q: Query, model: ExpFamilyModel, epsilon_kl: float) -> float:
    """Probability of playing the argmin: d(min theta, g+)^-1 / (d(min theta, g+)^-1 + d(max theta, g-)^-1)."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        raise DomainError("theta must be non-empty")
    inv_low = _reciprocal(max(kl_div(model, float(theta.min()), q.gamma_plus), epsilon_kl))
    inv_high = _reciprocal(max(kl_div(model, float(theta.max()), q.gamma_minus), epsilon_kl))
    if inv_low + inv_high == 0.0:
        raise QueryError(f"Both divergences are infinite for query {q.describe()}")
    return inv_low / (inv_low + inv_high)


def thompson_chm_step(post: PosteriorState, q: Query, cfg: PolicyConfig, rng: np.random.Generator) -> StepTrace:
    """One Thompson-CHM round: conditional draw, beta_t, coin, argmin/argmax."""
    draw = conditional_sample(post, q, int(cfg.rejection_cap), rng)
    beta_t = compute_beta(draw.theta, q, post.model, cfg.epsilon_kl)
    coin = int(rng.random() < beta_t)
    arm = int(np.argmin(draw.theta)) if coin else int(np.argmax(draw.theta))
    return StepTrace(arm, draw.theta, beta_t, coin, draw.rejections, draw.saturated)


class Policy(ABC):
    """A sampling rule bound to one run; create a fresh instance per run."""

    kind: PolicyKind

    def __init__(self, instance: BanditInstance, stop: StopConfig, cfg: PolicyConfig):
        self.instance = instance
        self.model = instance.model
        self.query = instance.query
        self.stop = stop
        self.cfg = cfg

    def check_stop(self, state: RunState) -> StopOutcome:
        return check_stop(state, self.query, self.stop, self.model)

    @abstractmethod
    def select_arm(self, state: RunState, rng: np.random.Generator) -> StepTrace:
        ...

    def observe(self, state: RunState, arm: int, reward: float) -> None:
        state.record(arm, reward)


class ThompsonCHMPolicy(Policy):
    kind = PolicyKind.THOMPSON_CHM

    def select_arm(self, state: RunState, rng: np.random.Generator) -> StepTrace:
        return thompson_chm_step(state.posterior, self.query, self.cfg, rng)


class UniformPolicy(Policy):
    kind = PolicyKind.UNIFORM

    def select_arm(self, state: RunState, rng: np.random.Generator) -> StepTrace:
        return StepTrace(arm=state.t % state.num_arms)


class TwoPassPolicy(Policy):
    """
    Two one-sided Thompson-CHM runs back to back.

    Stage 1 tests (-inf, gamma), i.e. whether min mu < gamma. If it answers
    infeasible the composite answer is infeasible. Otherwise stage 2 tests
    (gamma, +inf) from a fresh state and its answer is the composite answer.
    Each stage uses risk delta / 2.
    """

    kind = PolicyKind.TWO_PASS

    def __init__(self, instance: BanditInstance, stop: StopConfig, cfg: PolicyConfig):
        if not instance.query.is_point:
            raise QueryError("The two-pass baseline only supports point queries")
        super().__init__(instance, stop, cfg)
        gamma = instance.query.gamma_minus
        self.stage_queries = (Query(-math.inf, gamma), Query(gamma, math.inf))
        self.stage_stop = StopConfig(stop.delta / 2.0, stop.r0_floor)
        self.stage = 0
        self.stage_state = RunState.fresh(self.model, instance.num_arms)
        self.stage_outcomes: List[StopOutcome] = []
        self.stage_lengths: List[int] = []

    def check_stop(self, state: RunState) -> StopOutcome:
        outcome = check_stop(self.stage_state, self.stage_queries[self.stage], self.stage_stop, self.model)
        if not outcome.stopped:
            return NOT_STOPPED

        self.stage_outcomes.append(outcome)
        self.stage_lengths.append(self.stage_state.t)
        if self.stage == 0 and outcome.decision is Decision.FEASIBLE:
            logger.debug(f"two-pass stage 1 done after {self.stage_state.t} rounds")
            self.stage = 1
            self.stage_state = RunState.fresh(self.model, self.instance.num_arms)
            return NOT_STOPPED
        return outcome

    def two_pass_step(self, rng: np.random.Generator) -> StepTrace:
        return thompson_chm_step(self.stage_state.posterior, self.stage_queries[self.stage], self.cfg, rng)

    def select_arm(self, state: RunState, rng: np.random.Generator) -> StepTrace:
        return self.two_pass_step(rng)

    def observe(self, state: RunState, arm: int, reward: float) -> None:
        state.record(arm, reward)
        self.stage_state.record(arm, reward)


_POLICIES = {
    PolicyKind.THOMPSON_CHM: ThompsonCHMPolicy,
    PolicyKind.UNIFORM: UniformPolicy,
    PolicyKind.TWO_PASS: TwoPassPolicy,
}


def get_policy(instance: BanditInstance, stop: StopConfig, cfg: PolicyConfig) -> Policy:
    """Fresh policy object for one run."""
    return _POLICIES[cfg.kind](instance, stop, cfg)
