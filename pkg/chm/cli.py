"""
Command-line front end.

Subcommands:
    oracle    T*, w*, gamma* and the sample-count lower bound per query
    run       one batch of runs; writes runs.csv and summary.csv
    sweep     one summary row per (query, delta) point; writes sweep.csv
    selftest  fast invariant suite

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 selftest failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from chm.config import PRESETS, ExperimentConfig, build_config, config_hash, load_config_file, validate
from chm.engine import BatchResult, run_batch
from chm.errors import ChmError, ConfigError
from chm.export import (ORACLE_FILE, RUNS_FILE, SUMMARY_FILE, SWEEP_FILE, TRACE_FILE, oracle_row,
                        summary_row, write_oracle, write_runs, write_summary, write_trace)
from chm.oracle import allocation_gap, brute_force_game, characteristic_time, lower_bound
from chm.paths import get_output_dir
from chm.policy import PolicyKind
from chm.selftest import run_selftest
from chm.state import BanditInstance
from chm.watchdog import monitor_function, watchdog

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SELFTEST = 4

BRUTE_FORCE_GAP_WARNING = 0.02

# argparse dest -> ExperimentConfig key
FLAG_KEYS = {
    "family": "family",
    "variance": "variance",
    "means": "means",
    "gamma": "gammas",
    "gamma_minus": "gamma_minus",
    "gamma_plus": "gamma_plus",
    "delta": "deltas",
    "policy": "policy",
    "reps": "reps",
    "seed": "base_seed",
    "max_steps": "max_steps",
    "out": "out",
    "brute_force": "brute_force",
    "init_rounds": "init_rounds",
    "trace_stride": "trace_stride",
    "workers": "workers",
    "rejection_cap": "rejection_cap",
    "prior_alpha": "prior_alpha",
    "prior_beta": "prior_beta",
    "prior_mean": "prior_mean",
    "prior_var": "prior_var",
    "epsilon_kl": "epsilon_kl",
    "r0_floor": "r0_floor",
}

# options whose value may start with "-" (-inf, negative means)
VALUE_OPTIONS = frozenset(["--config"] + ["--" + dest.replace("_", "-") for dest in FLAG_KEYS])


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON object or key = value file")
    parser.add_argument("--family", choices=["bernoulli", "gaussian"])
    parser.add_argument("--variance", help="known reward variance (gaussian)")
    parser.add_argument("--means", help="comma separated arm means")
    parser.add_argument("--gamma", help="point query, or a comma separated list for sweeps")
    parser.add_argument("--gamma-minus", help="interval lower end (number, inf or -inf)")
    parser.add_argument("--gamma-plus", help="interval upper end (number, inf or -inf)")
    parser.add_argument("--delta", help="confidence level, or a comma separated list")
    parser.add_argument("--policy", choices=[kind.value for kind in PolicyKind])
    parser.add_argument("--reps")
    parser.add_argument("--seed", help="base seed; run i uses seed + i")
    parser.add_argument("--max-steps")
    parser.add_argument("--out", metavar="DIR")
    parser.add_argument("--brute-force", metavar="N", help="also solve the game on an N-grid")
    parser.add_argument("--init-rounds", metavar="n", help="forced round-robin sweeps")
    parser.add_argument("--trace-stride", metavar="n", help="keep N(t) every n rounds; writes trace.csv")
    parser.add_argument("--workers", help="batch processes (capped by CHM_THREADS)")
    parser.add_argument("--rejection-cap")
    parser.add_argument("--prior-alpha", help="Beta prior alpha (bernoulli)")
    parser.add_argument("--prior-beta", help="Beta prior beta (bernoulli)")
    parser.add_argument("--prior-mean", help="Normal prior mean (gaussian)")
    parser.add_argument("--prior-var", help="Normal prior variance (gaussian)")
    parser.add_argument("--epsilon-kl", help="floor on divergences inside beta_t")
    parser.add_argument("--r0-floor", metavar="n", help="pulls an arm needs before it counts for stopping")
    parser.add_argument("--figure1", action="store_true", help="gamma sweep on the 7-arm instance")
    parser.add_argument("--figure2", action="store_true", help="proportions beside w* at gamma 0.25 and 0.9")


def join_option_values(argv: List[str]) -> List[str]:
    """Rewrite ``--flag value`` as ``--flag=value`` so argparse accepts values like -inf."""
    joined: List[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token in VALUE_OPTIONS and i + 1 < len(argv):
            joined.append(f"{token}={argv[i + 1]}")
            i += 2
        else:
            joined.append(token)
            i += 1
    return joined


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chm", description="Thompson-CHM pure exploration experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log INFO to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("oracle", "characteristic time and oracle allocation"),
                            ("run", "one batch of simulated runs"),
                            ("sweep", "one summary row per gamma / delta point")):
        _add_experiment_flags(sub.add_parser(name, help=help_text))
    sub.add_parser("selftest", help="fast invariant suite")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults < config file < figure preset < flags, then validate."""
    file_values = load_config_file(args.config) if args.config else None
    if args.figure1 and args.figure2:
        raise ConfigError("--figure1 and --figure2 are mutually exclusive")
    preset = PRESETS["figure1"] if args.figure1 else PRESETS["figure2"] if args.figure2 else None
    overrides = {key: getattr(args, dest) for dest, key in FLAG_KEYS.items()}
    config = build_config(file_values, overrides, preset, path=args.config)
    validate(config)
    return config


def output_dir(config: ExperimentConfig) -> Path:
    return Path(config.out) if config.out else get_output_dir()


def _fmt_weights(weights) -> str:
    return " ".join(f"{w:.4f}" for w in weights)


@monitor_function(warn_slow=60)
def cmd_oracle(config: ExperimentConfig) -> int:
    model = config.model()
    rows = []
    for instance in config.instances():
        q = instance.query
        result = characteristic_time(model, instance.means, q)
        label = "feasible" if result.feasible else "infeasible"
        print(f"{q.describe()}: {label}  T*={result.t_star:.6g}", end="")
        print("" if result.gamma_star is None else f"  gamma*={result.gamma_star:g}")
        print(f"  w* = {_fmt_weights(result.weights)}")

        solution = None
        if config.brute_force:
            solution = brute_force_game(model, instance.means, q, config.brute_force)
            brute_t_star = 1.0 / solution.value
            gap = abs(brute_t_star - result.t_star) / result.t_star
            print(f"  brute force (grid {config.brute_force}): T*={brute_t_star:.6g}  "
                  f"relative gap={gap:.3%}  w={_fmt_weights(solution.weights)}")
            if gap > BRUTE_FORCE_GAP_WARNING:
                watchdog.log_anomaly("ORACLE_GAP", f"Closed form and grid disagree on {q.describe()}",
                                     expected=result.t_star, actual=brute_t_star)

        for delta in config.deltas:
            bound = lower_bound(result.t_star, delta)
            print(f"  delta={delta:g}: lower bound {bound:.6g}")
            rows.append(oracle_row(q, result, delta, bound, config.brute_force, solution))

    path = write_oracle(output_dir(config) / ORACLE_FILE, rows, len(config.means))
    print(f"wrote {path}")
    return EXIT_OK


def _batch(config: ExperimentConfig, instance: BanditInstance, delta: float) -> BatchResult:
    return run_batch(instance, config.policy_config(), config.stop_config(delta),
                     reps=config.reps, base_seed=config.base_seed, max_steps=config.max_steps,
                     workers=config.workers, init_rounds=config.init_rounds,
                     trace_stride=config.trace_stride)


def _summary(config: ExperimentConfig, instance: BanditInstance, delta: float,
             batch: BatchResult) -> List[Any]:
    q = instance.query
    oracle = characteristic_time(instance.model, instance.means, q)
    digest = config_hash(config, gamma_minus=q.gamma_minus, gamma_plus=q.gamma_plus, delta=delta)
    stats = batch.stats
    print(f"{q.describe()} delta={delta:g}: mean tau {stats.mean_tau:.1f} (se {stats.tau_se:.1f}), "
          f"errors {stats.errors}/{stats.completed}, truncated {stats.truncated}, "
          f"max |N/tau - w*| {allocation_gap(stats.mean_proportions, oracle):.3f}")
    return summary_row(digest, config.family, config.policy, q, delta, stats, oracle,
                       lower_bound(oracle.t_star, delta))


@monitor_function(warn_slow=600)
def cmd_run(config: ExperimentConfig) -> int:
    instances = config.instances()
    if len(instances) != 1 or len(config.deltas) != 1:
        raise ConfigError("run takes a single query and a single delta; use sweep for lists")
    instance, delta = instances[0], config.deltas[0]

    batch = _batch(config, instance, delta)
    row = _summary(config, instance, delta, batch)

    out = output_dir(config)
    k = instance.num_arms
    written = [write_runs(out / RUNS_FILE, batch.records, k), write_summary(out / SUMMARY_FILE, [row], k)]
    if "trace_stride" in config.sources:
        written.append(write_trace(out / TRACE_FILE, batch.records, k))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


@monitor_function(warn_slow=3600)
def cmd_sweep(config: ExperimentConfig) -> int:
    rows = []
    for instance in config.instances():
        for delta in config.deltas:
            rows.append(_summary(config, instance, delta, _batch(config, instance, delta)))
    path = write_summary(output_dir(config) / SWEEP_FILE, rows, len(config.means))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_selftest() -> int:
    results = run_selftest()
    for result in results:
        status = "ok  " if result.passed else "FAIL"
        print(f"[{status}] {result.name} ({result.seconds:.2f}s): {result.detail}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


COMMANDS = {"oracle": cmd_oracle, "run": cmd_run, "sweep": cmd_sweep}


def main(argv: Optional[List[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(join_option_values(list(argv)))
    if args.verbose:
        for handler in watchdog.logger.handlers:
            if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
                handler.setLevel(logging.INFO)

    try:
        if args.command == "selftest":
            return cmd_selftest()
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except ChmError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        where = e.filename or "output"
        print(f"I/O error: {where}: {e.strerror or e}", file=sys.stderr)
        watchdog.log_warning("IO_ERROR", f"{where}: {e}")
        return EXIT_IO
