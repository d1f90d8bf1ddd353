"""
Fast invariant suite behind `selftest`.

Each check returns a CheckResult instead of raising so that one broken
kernel does not hide the others.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from chm import exp_family
from chm.exp_family import ExpFamilyModel
from chm.oracle import Query, brute_force_game, characteristic_time
from chm.state import RunState
from chm.stopping import Decision, FiredRule, StopConfig, check_stop, h, h_inv, significance, thresh

logger = logging.getLogger(__name__)

FUZZ_SEED = 20230
FUZZ_CASES = 500
BRUTE_FORCE_GRID = 200
BRUTE_FORCE_TOLERANCE = 0.02


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def _expect(condition, message: str) -> None:
    if not condition:
        raise AssertionError(message)


def check_kl_identities() -> str:
    bern = ExpFamilyModel.bernoulli()
    gauss = ExpFamilyModel.gaussian(variance=1.0)
    kl = exp_family.kl_div

    expected = 0.1 * math.log(0.4) + 0.9 * math.log(1.2)
    _expect(abs(kl(bern, 0.1, 0.25) - expected) < 1e-12, f"kl(0.1, 0.25) = {kl(bern, 0.1, 0.25)}")
    _expect(abs(kl(gauss, 0.0, 1.0) - 0.5) < 1e-12, f"gaussian kl(0, 1) = {kl(gauss, 0.0, 1.0)}")
    _expect(kl(bern, 0.3, math.inf) == math.inf, "divergence to +inf must be +inf")

    grid = np.round(np.linspace(0.01, 0.99, 99), 2)
    for q in (0.05, 0.3, 0.5, 0.77, 0.95):
        values = kl(bern, grid, q)
        _expect(np.all(values >= 0.0), f"negative divergence against q={q}")
        _expect(np.all((values == 0.0) == (grid == q)), f"kl zero away from identity at q={q}")
        _expect(kl(bern, q, q) == 0.0, f"kl(q, q) != 0 at q={q}")
    return "bernoulli and gaussian identities hold"


def check_h_round_trip() -> str:
    for y in (1.0, 1.5, 2.0, 5.0, 20.0, 100.0):
        u = h_inv(y)
        _expect(u >= 1.0, f"h_inv({y}) = {u} < 1")
        _expect(abs(h(u) - y) < 1e-10, f"h(h_inv({y})) = {h(u)}")
    return "h(h_inv(y)) == y to 1e-10"


def check_thresh_monotone() -> str:
    rs = np.unique(np.round(np.logspace(0, 6, 400)).astype(int))
    for delta in (0.1, 0.01):
        values = [thresh(delta, int(r)) for r in rs]
        _expect(all(b >= a for a, b in zip(values, values[1:])), f"thresh not monotone at delta={delta}")
    _expect(thresh(0.01, 10) > thresh(0.1, 10), "thresh must grow as delta shrinks")
    return f"monotone over {rs.size} values of r"


def check_oracle_brute_force() -> str:
    model = ExpFamilyModel.bernoulli()
    means = (0.2, 0.5, 0.8)
    gaps = []
    for q in (Query.point(0.4), Query.point(0.9), Query(0.55, 0.9)):
        exact = characteristic_time(model, means, q)
        solution = brute_force_game(model, means, q, BRUTE_FORCE_GRID)
        gap = abs(1.0 / solution.value - exact.t_star) / exact.t_star
        _expect(gap <= BRUTE_FORCE_TOLERANCE, f"{q.describe()}: relative gap {gap:.4f}")
        gaps.append(gap)
    return f"max relative gap {max(gaps):.2e}"


def check_stopping_exclusive() -> str:
    rng = np.random.default_rng(FUZZ_SEED)
    model = ExpFamilyModel.bernoulli()
    fired = 0
    for _ in range(FUZZ_CASES):
        k = int(rng.integers(1, 6))
        means = rng.uniform(0.02, 0.98, size=k)
        state = RunState.fresh(model, k)
        state.counts = rng.integers(0, 3000, size=k)
        state.sums = rng.binomial(state.counts, means).astype(float)
        state.t = int(state.counts.sum())

        lo, hi = np.sort(rng.uniform(0.05, 0.95, size=2))
        q = Query.point(lo) if rng.random() < 0.5 else Query(lo, hi)
        cfg = StopConfig(float(rng.choice([0.1, 0.01])))

        sig = significance(state, q, cfg, model)
        outcome = check_stop(state, q, cfg, model)
        if sig is None:
            _expect(not outcome.stopped, "stopped without any pulls")
            continue
        held = [sig.tau1, sig.tau2, sig.tau3]
        _expect(sum(held) <= 1, f"stopping times overlap: {held} for {q.describe()}")
        if outcome.stopped:
            fired += 1
            expected = Decision.FEASIBLE if outcome.fired is FiredRule.TAU3 else Decision.INFEASIBLE
            _expect(outcome.decision is expected, f"{outcome.fired} mapped to {outcome.decision}")
    return f"{FUZZ_CASES} states, {fired} stopped"


CHECKS: List[Callable[[], str]] = [
    check_kl_identities,
    check_h_round_trip,
    check_thresh_monotone,
    check_oracle_brute_force,
    check_stopping_exclusive,
]


def run_selftest() -> List[CheckResult]:
    results = []
    for check in CHECKS:
        start = time.time()
        try:
            detail = check()
            passed = True
        except Exception as e:
            detail = f"{type(e).__name__}: {e}"
            passed = False
            logger.error(f"selftest {check.__name__} failed: {detail}")
        results.append(CheckResult(check.__name__, passed, detail, time.time() - start))
    return results
