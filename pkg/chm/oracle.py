"""
Characteristic time and oracle allocation for point and interval queries.

The exploration game: SUP picks arm proportions w on the simplex, INF picks
the cheapest alternative mean vector giving the opposite answer. Its value
is 1 / T*(mu) and its maximiser is w*(mu). This module evaluates both in
closed form and also solves the game by brute force on a simplex grid so the
closed forms can be checked independently.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from chm.errors import AssumptionError, DomainError, OracleError, QueryError
from chm.exp_family import ExpFamilyModel, bernoulli_kl, kl_div, kl_div_minus, kl_div_plus

logger = logging.getLogger(__name__)

ENDPOINT_TOLERANCE = 1e-12
MAX_BRUTE_FORCE_ARMS = 4
MIN_BRUTE_FORCE_GRID = 50


@dataclass(frozen=True)
class Query:
    """The open set (gamma_minus, gamma_plus); a point query has both ends equal."""

    gamma_minus: float
    gamma_plus: float

    def __post_init__(self):
        lo, hi = float(self.gamma_minus), float(self.gamma_plus)
        object.__setattr__(self, "gamma_minus", lo)
        object.__setattr__(self, "gamma_plus", hi)
        if math.isnan(lo) or math.isnan(hi):
            raise QueryError("Query endpoints must not be NaN")
        if lo > hi:
            raise QueryError(f"gamma_minus ({lo}) must not exceed gamma_plus ({hi})")
        if lo == -math.inf and hi == math.inf:
            raise QueryError("The query (-inf, +inf) is degenerate: every instance is feasible")
        if lo == hi and math.isinf(lo):
            raise QueryError("A point query needs a finite gamma")

    @classmethod
    def point(cls, gamma: float) -> "Query":
        return cls(gamma, gamma)

    @property
    def is_point(self) -> bool:
        return self.gamma_minus == self.gamma_plus

    @property
    def finite_endpoints(self) -> Tuple[float, ...]:
        return tuple(g for g in {self.gamma_minus, self.gamma_plus} if math.isfinite(g))

    def describe(self) -> str:
        if self.is_point:
            return f"gamma={self.gamma_minus:g}"
        return f"({self.gamma_minus:g}, {self.gamma_plus:g})"


@dataclass(frozen=True)
class OracleResult:
    feasible: bool
    t_star: float
    weights: np.ndarray
    gamma_star: Optional[float] = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, OracleResult):
            return NotImplemented
        return (self.feasible == other.feasible
                and self.t_star == other.t_star
                and np.array_equal(self.weights, other.weights)
                and self.gamma_star == other.gamma_star)


@dataclass(frozen=True)
class GameSolution:
    """Best grid point found by brute_force_game."""

    value: float
    weights: np.ndarray


def _as_means(means: Sequence[float]) -> np.ndarray:
    arr = np.asarray(means, dtype=float)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise DomainError("Need a non-empty vector of means")
    return arr


def check_endpoint_assumption(means: Sequence[float], q: Query) -> None:
    """Raise AssumptionError when a mean sits on a finite query endpoint."""
    arr = _as_means(means)
    for gamma in q.finite_endpoints:
        close = np.abs(arr - gamma) <= ENDPOINT_TOLERANCE
        if np.any(close):
            arm = int(np.flatnonzero(close)[0])
            raise AssumptionError(
                f"Mean of arm {arm + 1} ({arr[arm]}) coincides with query endpoint {gamma}"
            )


def feasibility(means: Sequence[float], q: Query) -> bool:
    """True when (gamma_minus, gamma_plus) meets the convex hull [min mu, max mu]."""
    arr = _as_means(means)
    check_endpoint_assumption(arr, q)
    return bool(arr.min() < q.gamma_plus and arr.max() > q.gamma_minus)


def _reciprocal(d: float) -> float:
    return 0.0 if math.isinf(d) else 1.0 / d


def _gamma_star(means: np.ndarray, q: Query) -> float:
    """Endpoint closest to any mean; ties go to gamma_minus."""
    dist_minus = float(np.min(np.abs(means - q.gamma_minus)))
    dist_plus = float(np.min(np.abs(means - q.gamma_plus)))
    return q.gamma_minus if dist_minus <= dist_plus else q.gamma_plus


def _unique_extreme(means: np.ndarray, index: int, label: str) -> None:
    if np.count_nonzero(means == means[index]) > 1:
        raise AssumptionError(f"The {label} mean {means[index]} is attained by more than one arm")


def characteristic_time(model: ExpFamilyModel, means: Sequence[float], q: Query) -> OracleResult:
    """
    T*(mu), w*(mu) and, for infeasible instances, the active threshold gamma*.

    Feasible instances put all weight on the lowest and highest arm. When both
    endpoints are finite and an extreme arm lies strictly inside the interval,
    that arm pays on both sides of the game and the pair weights are found by
    solving the two-arm max-min exactly; otherwise the closed form applies.
    """
    arr = _as_means(means)
    model.check_mean(arr)
    k = arr.shape[0]

    if feasibility(arr, q):
        i_min, i_max = int(np.argmin(arr)), int(np.argmax(arr))
        if k > 1:
            _unique_extreme(arr, i_min, "lowest")
            _unique_extreme(arr, i_max, "highest")

        lo_cost = kl_div_plus(model, arr, q.gamma_plus)
        hi_cost = kl_div_minus(model, arr, q.gamma_minus)
        weights = np.zeros(k)

        both_finite = math.isfinite(q.gamma_minus) and math.isfinite(q.gamma_plus)
        overlapping = both_finite and (hi_cost[i_min] > 0.0 or lo_cost[i_max] > 0.0)
        if not overlapping:
            inv_lo = _reciprocal(kl_div(model, arr[i_min], q.gamma_plus))
            inv_hi = _reciprocal(kl_div(model, arr[i_max], q.gamma_minus))
            t_star = inv_lo + inv_hi
            weights[i_min] += inv_lo / t_star
            weights[i_max] += inv_hi / t_star
            return OracleResult(True, t_star, weights)

        w_min, value = _solve_pair(lo_cost[i_min], lo_cost[i_max], hi_cost[i_min], hi_cost[i_max])
        if i_min == i_max:
            weights[i_min] = 1.0
        else:
            weights[i_min] = w_min
            weights[i_max] = 1.0 - w_min
        return OracleResult(True, 1.0 / value, weights)

    gamma_star = _gamma_star(arr, q)
    inv = 1.0 / kl_div(model, arr, gamma_star)
    t_star = float(np.sum(inv))
    return OracleResult(False, t_star, inv / t_star, gamma_star)


def _solve_pair(a_lo: float, a_hi: float, b_lo: float, b_hi: float) -> Tuple[float, float]:
    """
    max over w in [0, 1] of min(w a_lo + (1-w) a_hi, w b_lo + (1-w) b_hi).

    a_* are the costs of pushing an arm above gamma_plus, b_* of pushing it
    below gamma_minus; w is the weight on the lowest arm. Returns (w, value).
    """
    def value(w: float) -> float:
        return min(w * a_lo + (1.0 - w) * a_hi, w * b_lo + (1.0 - w) * b_hi)

    candidates = [0.0, 1.0]
    denom = (a_lo - a_hi) + (b_hi - b_lo)
    if denom > 0.0:
        crossing = (b_hi - a_hi) / denom
        if 0.0 <= crossing <= 1.0:
            candidates.insert(0, crossing)
    best = max(candidates, key=value)
    return best, value(best)


def lower_bound(t_star: float, delta: float) -> float:
    """T*(mu) kl(delta, 1 - delta): the expected-sample-count lower bound."""
    if not 0.0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    return t_star * bernoulli_kl(delta, 1.0 - delta)


def _weighted_cost(w: np.ndarray, costs: np.ndarray) -> np.ndarray:
    """Row-wise sum of w * costs with 0 * inf treated as 0."""
    infinite = np.isinf(costs)
    total = w @ np.where(infinite, 0.0, costs)
    if np.any(infinite):
        hit = np.any(w[:, infinite] > 0.0, axis=1)
        total = np.where(hit, np.inf, total)
    return total


def _compositions(parts: int, total: int) -> np.ndarray:
    """All non-negative integer vectors of length `parts` summing to `total`."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        first = np.arange(total, -1, -1, dtype=np.int64)
        return np.column_stack([first, total - first])
    blocks = []
    for first in range(total, -1, -1):
        rest = _compositions(parts - 1, total - first)
        blocks.append(np.column_stack([np.full(rest.shape[0], first, dtype=np.int64), rest]))
    return np.vstack(blocks)


def _simplex_blocks(k: int, grid: int) -> Iterator[np.ndarray]:
    """Uniform simplex grid with `grid` subdivisions, one block per leading coordinate."""
    if k <= 2:
        yield _compositions(k, grid) / grid
        return
    for first in range(grid, -1, -1):
        rest = _compositions(k - 1, grid - first)
        block = np.column_stack([np.full(rest.shape[0], first, dtype=np.int64), rest])
        yield block / grid


def brute_force_game(model: ExpFamilyModel, means: Sequence[float], q: Query, grid: int) -> GameSolution:
    """
    Solve max_w inf_lambda sum_a w_a d(mu_a, lambda_a) over a simplex grid.

    The inner infimum is evaluated analytically: the adversary moves arms onto
    the relevant endpoint. Feasible instances cost the cheaper of pushing every
    arm above gamma_plus or every arm below gamma_minus; infeasible instances
    cost the cheapest single arm moved across gamma*.
    """
    arr = _as_means(means)
    model.check_mean(arr)
    k = arr.shape[0]
    if k > MAX_BRUTE_FORCE_ARMS:
        raise OracleError(f"Brute force supports at most {MAX_BRUTE_FORCE_ARMS} arms, got {k}")
    if grid < MIN_BRUTE_FORCE_GRID:
        raise OracleError(f"Grid must have at least {MIN_BRUTE_FORCE_GRID} subdivisions, got {grid}")

    if feasibility(arr, q):
        lo_cost = np.atleast_1d(kl_div_plus(model, arr, q.gamma_plus))
        hi_cost = np.atleast_1d(kl_div_minus(model, arr, q.gamma_minus))

        def inner(w: np.ndarray) -> np.ndarray:
            return np.minimum(_weighted_cost(w, lo_cost), _weighted_cost(w, hi_cost))
    else:
        cost = np.atleast_1d(kl_div(model, arr, _gamma_star(arr, q)))

        def inner(w: np.ndarray) -> np.ndarray:
            return np.min(w * cost, axis=1)

    best_value, best_w = -np.inf, None
    for block in _simplex_blocks(k, grid):
        values = inner(block)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value, best_w = float(values[idx]), block[idx].copy()

    logger.debug(f"brute force on {k} arms, grid {grid}: value {best_value:.6g}")
    return GameSolution(best_value, best_w)


def allocation_gap(proportions: Sequence[float], result: OracleResult) -> float:
    """Largest absolute difference between empirical proportions and w*."""
    return float(np.max(np.abs(np.asarray(proportions, dtype=float) - result.weights)))


def two_pass_allocation(model: ExpFamilyModel, means: Sequence[float], gamma: float) -> np.ndarray:
    """
    Limiting arm proportions of the two-pass baseline at a point query.

    The baseline first decides min mu < gamma on (-inf, gamma), then, if that
    holds, max mu > gamma on (gamma, +inf). Proportions are the stage
    allocations weighted by the stage characteristic times.
    """
    arr = _as_means(means)
    first = characteristic_time(model, arr, Query(-math.inf, gamma))
    counts = first.weights * first.t_star
    if first.feasible:
        second = characteristic_time(model, arr, Query(gamma, math.inf))
        counts = counts + second.weights * second.t_star
    return counts / counts.sum()
