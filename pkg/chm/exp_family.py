"""
One-dimensional exponential-family reward models.

Bernoulli rewards (Beta conjugate prior) and Gaussian rewards with known
variance (Normal conjugate prior on the mean). Provides the KL divergence
between two members parameterized by their means, its one-sided variants,
conjugate posterior updates and posterior / reward sampling.

Thresholds may be +/-inf; the divergence from any mean to an infinite
threshold is +inf.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import rel_entr

from chm.errors import DomainError

ArrayLike = Union[float, np.ndarray]

# Keeps Beta draws inside the open unit interval.
_OPEN_LOW = np.nextafter(0.0, 1.0)
_OPEN_HIGH = np.nextafter(1.0, 0.0)


class Family(str, Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ExpFamilyModel:
    """
    Reward family plus conjugate prior hyperparameters.

    Bernoulli uses Beta(prior_alpha, prior_beta); Gaussian uses
    Normal(prior_mean, prior_var) on the mean and a known observation
    variance.
    """

    family: Family = Family.BERNOULLI
    variance: float = 1.0
    prior_alpha: float = 1.0
    prior_beta: float = 1.0
    prior_mean: float = 0.0
    prior_var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.BERNOULLI:
            if not (self.prior_alpha > 0 and self.prior_beta > 0):
                raise DomainError(
                    f"Beta prior needs positive parameters, got ({self.prior_alpha}, {self.prior_beta})"
                )
        else:
            if not self.variance > 0:
                raise DomainError(f"Gaussian variance must be positive, got {self.variance}")
            if not self.prior_var > 0:
                raise DomainError(f"Gaussian prior variance must be positive, got {self.prior_var}")

    @classmethod
    def bernoulli(cls, alpha: float = 1.0, beta: float = 1.0) -> "ExpFamilyModel":
        return cls(Family.BERNOULLI, prior_alpha=alpha, prior_beta=beta)

    @classmethod
    def gaussian(cls, variance: float = 1.0, prior_mean: float = 0.0,
                 prior_var: float = 1.0) -> "ExpFamilyModel":
        return cls(Family.GAUSSIAN, variance=variance, prior_mean=prior_mean, prior_var=prior_var)

    @property
    def is_bernoulli(self) -> bool:
        return self.family is Family.BERNOULLI

    def check_mean(self, mu: ArrayLike) -> None:
        """Raise DomainError unless every mean lies in the (open) mean domain."""
        arr = np.asarray(mu, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"Means must be finite, got {mu}")
        if self.is_bernoulli and not np.all((arr > 0.0) & (arr < 1.0)):
            raise DomainError(f"Bernoulli means must lie in (0, 1), got {mu}")

    def check_statistic(self, mu: ArrayLike) -> None:
        """Like check_mean but on the closure of the domain, where empirical means live."""
        arr = np.asarray(mu, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"Means must be finite, got {mu}")
        if self.is_bernoulli and not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise DomainError(f"Bernoulli means must lie in [0, 1], got {mu}")


def bernoulli_kl(p: float, q: float) -> float:
    """kl(p, q) between Bernoulli(p) and Bernoulli(q), with 0 ln 0 = 0."""
    if p == q:
        return 0.0
    return float(rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q))


def kl_div(model: ExpFamilyModel, mu1: ArrayLike, mu2: float) -> ArrayLike:
    """
    KL divergence d(mu1, mu2) between two members of the family.

    mu1 may be a scalar or an array; mu2 is a scalar threshold and may be
    +/-inf. Bernoulli q in {0, 1} against p strictly inside gives +inf.
    """
    p = np.asarray(mu1, dtype=float)
    model.check_statistic(p)
    q = float(mu2)

    if math.isinf(q):
        out = np.full(p.shape, np.inf)
    elif model.is_bernoulli:
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"Bernoulli mean must lie in [0, 1], got {q}")
        out = rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)
    else:
        out = (p - q) ** 2 / (2.0 * model.variance)

    out = np.where(p == q, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def kl_div_plus(model: ExpFamilyModel, u: ArrayLike, v: float) -> ArrayLike:
    """d+(u, v) = d(u, v) when u <= v, else 0."""
    d = kl_div(model, u, v)
    out = np.where(np.asarray(u, dtype=float) <= v, d, 0.0)
    return float(out) if out.ndim == 0 else out


def kl_div_minus(model: ExpFamilyModel, u: ArrayLike, v: float) -> ArrayLike:
    """d-(u, v) = d(u, v) when u >= v, else 0."""
    d = kl_div(model, u, v)
    out = np.where(np.asarray(u, dtype=float) >= v, d, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PosteriorState:
    """
    Per-arm conjugate hyperparameters.

    For Bernoulli `first`/`second` hold (alpha_a, beta_a); for Gaussian
    they hold (m_a, kappa_a^2).
    """

    model: ExpFamilyModel
    first: np.ndarray
    second: np.ndarray

    @classmethod
    def from_prior(cls, model: ExpFamilyModel, num_arms: int) -> "PosteriorState":
        if num_arms < 1:
            raise DomainError(f"Need at least one arm, got {num_arms}")
        if model.is_bernoulli:
            first, second = model.prior_alpha, model.prior_beta
        else:
            first, second = model.prior_mean, model.prior_var
        return cls(model, np.full(num_arms, float(first)), np.full(num_arms, float(second)))

    @property
    def num_arms(self) -> int:
        return int(self.first.shape[0])

    def mean(self) -> np.ndarray:
        """Posterior mean of every arm's mean parameter."""
        if self.model.is_bernoulli:
            return self.first / (self.first + self.second)
        return self.first.copy()


def posterior_update(post: PosteriorState, arm: int, reward: float) -> PosteriorState:
    """Conjugate update of one arm; all other arms are unchanged."""
    if not 0 <= arm < post.num_arms:
        raise DomainError(f"Arm index {arm} out of range for {post.num_arms} arms")

    first = post.first.copy()
    second = post.second.copy()
    if post.model.is_bernoulli:
        if reward not in (0, 1):
            raise DomainError(f"Bernoulli reward must be 0 or 1, got {reward}")
        first[arm] += reward
        second[arm] += 1 - reward
    else:
        if not math.isfinite(reward):
            raise DomainError(f"Gaussian reward must be finite, got {reward}")
        precision = 1.0 / second[arm] + 1.0 / post.model.variance
        new_var = 1.0 / precision
        first[arm] = new_var * (first[arm] / second[arm] + reward / post.model.variance)
        second[arm] = new_var
    return replace(post, first=first, second=second)


def posterior_sample_batch(post: PosteriorState, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw `size` independent mean vectors, shape (size, K)."""
    shape = (size, post.num_arms)
    if post.model.is_bernoulli:
        theta = rng.beta(post.first, post.second, size=shape)
        return np.clip(theta, _OPEN_LOW, _OPEN_HIGH)
    return rng.normal(post.first, np.sqrt(post.second), size=shape)


def posterior_sample(post: PosteriorState, rng: np.random.Generator) -> np.ndarray:
    """One draw theta_a from every arm's posterior over its mean."""
    return posterior_sample_batch(post, rng, 1)[0]


def reward_sample(model: ExpFamilyModel, mu: float, rng: np.random.Generator) -> float:
    """Draw one reward from the arm distribution with mean mu."""
    model.check_mean(mu)
    if model.is_bernoulli:
        return float(rng.random() < mu)
    return float(rng.normal(mu, math.sqrt(model.variance)))
