"""
GLR-style stopping rule for the CHM test.

Three stopping times are checked every round:
- tau1: every arm is significantly above gamma_plus  -> infeasible
- tau2: every arm is significantly below gamma_minus -> infeasible
- tau3: one arm is significantly below gamma_plus and one (possibly the
        same) significantly above gamma_minus       -> feasible

"Significantly" means N_a d(mu_hat_a, gamma) >= thresh(delta, N_a), with
the threshold thresh(delta, r) = ln(1 + ln r) + T(ln(1/delta)).
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from chm.errors import DomainError
from chm.exp_family import ExpFamilyModel, kl_div_minus, kl_div_plus
from chm.oracle import Query

if TYPE_CHECKING:
    from chm.state import RunState

H_INV_TOLERANCE = 1e-12
LN_ZETA_2 = math.log(math.pi ** 2 / 6.0)


class FiredRule(str, Enum):
    NONE = "none"
    TAU1 = "tau1"
    TAU2 = "tau2"
    TAU3 = "tau3"


class Decision(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class StopConfig:
    delta: float
    r0_floor: int = 1

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.r0_floor) < 1:
            raise DomainError(f"r0_floor must be at least 1, got {self.r0_floor}")


@dataclass(frozen=True)
class StopOutcome:
    fired: FiredRule = FiredRule.NONE
    decision: Optional[Decision] = None
    witnesses: Tuple[int, ...] = ()

    @property
    def stopped(self) -> bool:
        return self.fired is not FiredRule.NONE


NOT_STOPPED = StopOutcome()


def h(u: float) -> float:
    """h(u) = u - ln(u) on [1, inf)."""
    if u < 1.0:
        raise DomainError(f"h is defined for u >= 1, got {u}")
    return u - math.log(u)


def h_inv(y: float) -> float:
    """The unique u >= 1 with h(u) = y."""
    if y < 1.0:
        raise DomainError(f"h_inv is defined for y >= 1, got {y}")
    if y == 1.0:
        return 1.0
    upper = y + math.log(y) + 2.0
    return brentq(lambda u: h(u) - y, 1.0, upper, xtol=H_INV_TOLERANCE)


@lru_cache(maxsize=256)
def threshold_T(x: float) -> float:
    """T(x) = 2 h_inv(1 + (h_inv(1 + x) + ln zeta(2)) / 2)."""
    if x < 0.0:
        raise DomainError(f"T is defined for x >= 0, got {x}")
    return 2.0 * h_inv(1.0 + (h_inv(1.0 + x) + LN_ZETA_2) / 2.0)


def thresh(delta: float, r: int) -> float:
    """Per-arm stopping boundary ln(1 + ln r) + T(ln(1/delta))."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if r < 1:
        raise DomainError(f"r must be at least 1, got {r}")
    return math.log1p(math.log(r)) + threshold_T(math.log(1.0 / delta))


def _thresholds(delta: float, counts: np.ndarray) -> np.ndarray:
    """Vectorised thresh over pull counts; arms with N_a = 0 get +inf."""
    out = np.full(counts.shape, np.inf)
    pulled = counts >= 1
    out[pulled] = np.log1p(np.log(counts[pulled])) + threshold_T(math.log(1.0 / delta))
    return out


def _statistic(counts: np.ndarray, divergence: np.ndarray) -> np.ndarray:
    # N_a * d with N_a = 0 contributing nothing, even against an infinite d
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, counts * divergence, 0.0)


@dataclass(frozen=True)
class Significance:
    """Per-arm flags: is N_a d(mu_hat_a, gamma) past the threshold on each side."""

    below_plus: np.ndarray
    above_minus: np.ndarray
    above_plus: np.ndarray
    below_minus: np.ndarray

    @property
    def tau1(self) -> bool:
        return bool(np.all(self.above_plus))

    @property
    def tau2(self) -> bool:
        return bool(np.all(self.below_minus))

    @property
    def tau3(self) -> bool:
        return bool(np.any(self.below_plus) and np.any(self.above_minus))


def significance(state: "RunState", q: Query, cfg: StopConfig, model: ExpFamilyModel) -> Optional[Significance]:
    """The four significance masks, or None while no arm has reached r0_floor pulls."""
    counts = state.counts
    eligible = counts >= max(1, int(cfg.r0_floor))
    if not np.any(eligible):
        return None

    mu_hat = state.empirical_means(fill=0.5 if model.is_bernoulli else 0.0)
    limit = _thresholds(cfg.delta, counts)

    def passed(divergence: np.ndarray) -> np.ndarray:
        return eligible & (_statistic(counts, divergence) >= limit)

    return Significance(
        below_plus=passed(kl_div_plus(model, mu_hat, q.gamma_plus)),
        above_minus=passed(kl_div_minus(model, mu_hat, q.gamma_minus)),
        above_plus=passed(kl_div_minus(model, mu_hat, q.gamma_plus)),
        below_minus=passed(kl_div_plus(model, mu_hat, q.gamma_minus)),
    )


def check_stop(state: "RunState", q: Query, cfg: StopConfig, model: ExpFamilyModel) -> StopOutcome:
    """Evaluate tau3, then tau1, then tau2 at the current round."""
    sig = significance(state, q, cfg, model)
    if sig is None:
        return NOT_STOPPED

    if sig.tau3:
        witnesses = (int(np.argmax(sig.below_plus)), int(np.argmax(sig.above_minus)))
        return StopOutcome(FiredRule.TAU3, Decision.FEASIBLE, witnesses)
    if sig.tau1:
        return StopOutcome(FiredRule.TAU1, Decision.INFEASIBLE)
    if sig.tau2:
        return StopOutcome(FiredRule.TAU2, Decision.INFEASIBLE)
    return NOT_STOPPED
