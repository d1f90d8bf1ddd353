"""Bandit instance and per-run sampling state."""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from chm.errors import DomainError, QueryError
from chm.exp_family import ExpFamilyModel, PosteriorState, posterior_update
from chm.oracle import Query, check_endpoint_assumption, feasibility


@dataclass(frozen=True)
class BanditInstance:
    model: ExpFamilyModel
    means: Tuple[float, ...]
    query: Query

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if not means:
            raise DomainError("A bandit instance needs at least one arm")
        self.model.check_mean(means)
        if self.model.is_bernoulli:
            for gamma in self.query.finite_endpoints:
                if not 0.0 < gamma < 1.0:
                    raise QueryError(f"Bernoulli query endpoints must lie in (0, 1) or be infinite, got {gamma}")
        check_endpoint_assumption(means, self.query)

    @property
    def num_arms(self) -> int:
        return len(self.means)

    @property
    def feasible(self) -> bool:
        return feasibility(self.means, self.query)

    def with_query(self, query: Query) -> "BanditInstance":
        return BanditInstance(self.model, self.means, query)

    def with_gamma(self, gamma: float) -> "BanditInstance":
        return self.with_query(Query.point(gamma))


@dataclass
class RunState:
    """Counts N_a(t), reward sums S_a(t) and the posterior after t rounds."""

    model: ExpFamilyModel
    counts: np.ndarray
    sums: np.ndarray
    posterior: PosteriorState
    t: int = 0

    @classmethod
    def fresh(cls, model: ExpFamilyModel, num_arms: int) -> "RunState":
        return cls(
            model=model,
            counts=np.zeros(num_arms, dtype=np.int64),
            sums=np.zeros(num_arms),
            posterior=PosteriorState.from_prior(model, num_arms),
        )

    @property
    def num_arms(self) -> int:
        return int(self.counts.shape[0])

    def empirical_means(self, fill: float = math.nan) -> np.ndarray:
        """S_a / N_a, with `fill` for arms never pulled."""
        out = np.full(self.num_arms, float(fill))
        pulled = self.counts > 0
        out[pulled] = self.sums[pulled] / self.counts[pulled]
        return out

    def record(self, arm: int, reward: float) -> None:
        self.posterior = posterior_update(self.posterior, arm, reward)
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.t += 1

    def proportions(self) -> np.ndarray:
        if self.t == 0:
            return np.zeros(self.num_arms)
        return self.counts / self.t
