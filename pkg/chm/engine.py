"""
Simulation loop and seeded batch execution.

Each run owns its RNG, derived only from its seed, so a batch gives the same
records whether it runs serially or across a process pool.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import binomtest

from chm.errors import DomainError
from chm.exp_family import reward_sample
from chm.policy import PolicyConfig, StepTrace, get_policy
from chm.state import BanditInstance, RunState
from chm.stopping import Decision, FiredRule, StopConfig
from chm.watchdog import monitor_function, watchdog

logger = logging.getLogger(__name__)

CONFIDENCE_LEVEL = 0.95


@dataclass(frozen=True)
class TracePoint:
    t: int
    counts: Tuple[int, ...]


@dataclass
class RunRecord:
    decision: Decision
    tau: int
    fired: FiredRule
    proportions: np.ndarray
    correct: bool
    seed: int
    rejection_saturations: int = 0
    witnesses: Tuple[int, ...] = ()
    trace: List[TracePoint] = field(default_factory=list)
    steps: Optional[List[StepTrace]] = None

    @property
    def truncated(self) -> bool:
        return self.decision is Decision.TRUNCATED


@dataclass(frozen=True)
class AggregateStats:
    reps: int
    completed: int
    truncated: int
    mean_tau: float
    median_tau: float
    tau_se: float
    errors: int
    error_rate: float
    error_ci_low: float
    error_ci_high: float
    mean_proportions: np.ndarray
    proportions_se: np.ndarray
    rejection_saturations: int


@dataclass
class BatchResult:
    records: List[RunRecord]
    stats: AggregateStats


def make_rng(seed: int) -> np.random.Generator:
    """Generator for one run; SeedSequence mixes adjacent seeds apart."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def run_once(instance: BanditInstance, policy_cfg: PolicyConfig, stop_cfg: StopConfig,
             max_steps: int, seed: int, init_rounds: int = 0, trace_stride: int = 100,
             record_steps: bool = False) -> RunRecord:
    """
    Play one run until a stopping time fires or max_steps rounds have been played.

    The first `init_rounds` * K rounds are forced round-robin pulls. A trace
    point (t, N(t)) is kept every `trace_stride` rounds and at the end; a
    stride of 0 keeps only the final point.
    """
    if max_steps < 1:
        raise DomainError(f"max_steps must be at least 1, got {max_steps}")
    if seed < 0:
        raise DomainError(f"seed must be non-negative, got {seed}")
    if init_rounds < 0 or trace_stride < 0:
        raise DomainError("init_rounds and trace_stride must be non-negative")

    rng = make_rng(seed)
    policy = get_policy(instance, stop_cfg, policy_cfg)
    state = RunState.fresh(instance.model, instance.num_arms)
    forced = init_rounds * instance.num_arms

    trace: List[TracePoint] = []
    steps: Optional[List[StepTrace]] = [] if record_steps else None
    saturations = 0

    while True:
        outcome = policy.check_stop(state)
        if outcome.stopped or state.t >= max_steps:
            break

        if state.t < forced:
            step = StepTrace(arm=state.t % instance.num_arms)
        else:
            step = policy.select_arm(state, rng)
        saturations += int(step.saturated)
        if steps is not None:
            steps.append(step)

        reward = reward_sample(instance.model, instance.means[step.arm], rng)
        policy.observe(state, step.arm, reward)

        if trace_stride and state.t % trace_stride == 0:
            trace.append(TracePoint(state.t, tuple(int(n) for n in state.counts)))

    if not trace or trace[-1].t != state.t:
        trace.append(TracePoint(state.t, tuple(int(n) for n in state.counts)))

    if outcome.stopped:
        decision = outcome.decision
        correct = (decision is Decision.FEASIBLE) == instance.feasible
    else:
        decision = Decision.TRUNCATED
        correct = False

    return RunRecord(
        decision=decision,
        tau=state.t,
        fired=outcome.fired,
        proportions=state.proportions(),
        correct=correct,
        seed=int(seed),
        rejection_saturations=saturations,
        witnesses=outcome.witnesses,
        trace=trace,
        steps=steps,
    )


def _run_job(job) -> RunRecord:
    instance, policy_cfg, stop_cfg, max_steps, seed, init_rounds, trace_stride, record_steps = job
    return run_once(instance, policy_cfg, stop_cfg, max_steps, seed,
                    init_rounds=init_rounds, trace_stride=trace_stride, record_steps=record_steps)


def _standard_error(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    if n < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else np.float64(0.0)
    return values.std(axis=0, ddof=1) / math.sqrt(n)


def aggregate(records: List[RunRecord]) -> AggregateStats:
    """
    Summary of a batch.

    Stopping times and proportions cover every run; the error rate and its
    exact binomial interval cover only runs that stopped.
    """
    if not records:
        raise DomainError("Cannot aggregate an empty batch")

    taus = np.array([r.tau for r in records], dtype=float)
    props = np.vstack([r.proportions for r in records])
    finished = [r for r in records if not r.truncated]
    errors = sum(1 for r in finished if not r.correct)

    if finished:
        ci = binomtest(errors, len(finished)).proportion_ci(CONFIDENCE_LEVEL, method="exact")
        error_rate, ci_low, ci_high = errors / len(finished), float(ci.low), float(ci.high)
    else:
        error_rate = ci_low = ci_high = math.nan

    return AggregateStats(
        reps=len(records),
        completed=len(finished),
        truncated=len(records) - len(finished),
        mean_tau=float(taus.mean()),
        median_tau=float(np.median(taus)),
        tau_se=float(_standard_error(taus)),
        errors=errors,
        error_rate=error_rate,
        error_ci_low=ci_low,
        error_ci_high=ci_high,
        mean_proportions=props.mean(axis=0),
        proportions_se=_standard_error(props),
        rejection_saturations=sum(r.rejection_saturations for r in records),
    )


def effective_workers(requested: int, reps: int) -> int:
    """Process count for a batch: the request, capped by CHM_THREADS when set and by reps."""
    workers = int(requested)
    cap = os.getenv("CHM_THREADS")
    if cap:
        workers = min(workers, int(cap))
    return max(1, min(workers, reps))


@monitor_function(warn_slow=600)
def run_batch(instance: BanditInstance, policy_cfg: PolicyConfig, stop_cfg: StopConfig,
              reps: int, base_seed: int, max_steps: int, workers: int = 1,
              init_rounds: int = 0, trace_stride: int = 100,
              record_steps: bool = False) -> BatchResult:
    """Run `reps` independent runs with seeds base_seed + i, in index order."""
    if reps < 1:
        raise DomainError(f"reps must be at least 1, got {reps}")

    jobs = [(instance, policy_cfg, stop_cfg, max_steps, base_seed + i, init_rounds,
             trace_stride, record_steps) for i in range(reps)]
    workers = effective_workers(workers, reps)

    logger.info(f"batch: {reps} runs of {policy_cfg.kind.value} on {instance.query.describe()}, "
                f"delta={stop_cfg.delta:g}, workers={workers}")
    if workers == 1:
        records = [_run_job(job) for job in jobs]
    else:
        with Pool(processes=workers) as pool:
            records = pool.map(_run_job, jobs, chunksize=max(1, reps // (4 * workers)))

    for record in records:
        watchdog.record_run(record)

    stats = aggregate(records)
    logger.info(f"batch done: mean tau {stats.mean_tau:.1f}, errors {stats.errors}/{stats.completed}, "
                f"truncated {stats.truncated}")
    return BatchResult(records, stats)
