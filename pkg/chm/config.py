"""
Experiment configuration.

Environment settings are read once at import (run.py loads .env first).
An experiment is described by a config file (JSON object or key = value
lines) plus command-line overrides; flags win over presets, presets over the
file, the file over defaults. Every value is checked by validate() before any
run starts and failures name the file line the bad key came from.
"""

import hashlib
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv import dotenv_values

from chm.errors import ChmError, ConfigError
from chm.exp_family import ExpFamilyModel, Family
from chm.oracle import MAX_BRUTE_FORCE_ARMS, MIN_BRUTE_FORCE_GRID, Query
from chm.policy import PolicyConfig, PolicyKind
from chm.state import BanditInstance
from chm.stopping import StopConfig

CHM_THREADS = int(os.getenv("CHM_THREADS", "1"))
MAX_STEPS = int(float(os.getenv("CHM_MAX_STEPS", "1e7")))
TRACE_STRIDE = int(os.getenv("CHM_TRACE_STRIDE", "100"))
REJECTION_CAP = int(float(os.getenv("CHM_REJECTION_CAP", "1e5")))

SEVEN_ARM_MEANS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]

FIGURE1 = {
    "family": "bernoulli",
    "means": SEVEN_ARM_MEANS,
    "gammas": [0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.8, 0.85, 0.9, 0.95],
    "deltas": [0.01],
    "reps": 100,
}

FIGURE2 = {
    "family": "bernoulli",
    "means": SEVEN_ARM_MEANS,
    "gammas": [0.25, 0.9],
    "deltas": [0.01],
    "reps": 100,
}

PRESETS = {"figure1": FIGURE1, "figure2": FIGURE2}

# (value, line) as read from a config file
RawValue = Tuple[Any, Optional[int]]

ALIASES = {"gamma": "gammas", "delta": "deltas", "seed": "base_seed", "mu": "means"}


@dataclass
class ExperimentConfig:
    family: str = Family.BERNOULLI.value
    variance: float = 1.0
    prior_alpha: float = 1.0
    prior_beta: float = 1.0
    prior_mean: float = 0.0
    prior_var: float = 1.0
    means: List[float] = field(default_factory=list)
    gammas: List[float] = field(default_factory=list)
    gamma_minus: Optional[float] = None
    gamma_plus: Optional[float] = None
    deltas: List[float] = field(default_factory=lambda: [0.1])
    policy: str = PolicyKind.THOMPSON_CHM.value
    reps: int = 100
    base_seed: int = 0
    max_steps: int = MAX_STEPS
    trace_stride: int = TRACE_STRIDE
    init_rounds: int = 0
    rejection_cap: int = REJECTION_CAP
    epsilon_kl: float = 1e-12
    r0_floor: int = 1
    brute_force: Optional[int] = None
    workers: int = CHM_THREADS
    out: Optional[str] = None
    sources: Dict[str, Tuple[Optional[str], Optional[int]]] = field(
        default_factory=dict, repr=False, compare=False)

    @property
    def is_interval(self) -> bool:
        return self.gamma_minus is not None or self.gamma_plus is not None

    def model(self) -> ExpFamilyModel:
        return ExpFamilyModel(
            family=Family(self.family),
            variance=self.variance,
            prior_alpha=self.prior_alpha,
            prior_beta=self.prior_beta,
            prior_mean=self.prior_mean,
            prior_var=self.prior_var,
        )

    def queries(self) -> List[Query]:
        if self.is_interval:
            return [Query(self.gamma_minus, self.gamma_plus)]
        return [Query.point(g) for g in self.gammas]

    def instances(self) -> List[BanditInstance]:
        model = self.model()
        return [BanditInstance(model, tuple(self.means), q) for q in self.queries()]

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(PolicyKind(self.policy), self.rejection_cap, self.epsilon_kl)

    def stop_config(self, delta: float) -> StopConfig:
        return StopConfig(delta, self.r0_floor)


def _to_float(value: Any) -> float:
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("inf", "+inf", "infinity", "+infinity"):
            return math.inf
        if value in ("-inf", "-infinity"):
            return -math.inf
    return float(value)


def _to_int(value: Any) -> int:
    number = _to_float(value)
    if not number.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(number)


def _to_float_list(value: Any) -> List[float]:
    if isinstance(value, str):
        items = [part.strip() for part in value.strip().strip("[]").split(",")]
        return [_to_float(item) for item in items if item]
    if isinstance(value, (list, tuple)):
        return [_to_float(item) for item in value]
    return [_to_float(value)]


def _to_optional_int(value: Any) -> Optional[int]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "off")):
        return None
    return _to_int(value)


def _to_optional_float(value: Any) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
        return None
    return _to_float(value)


def _to_str(value: Any) -> str:
    return str(value).strip().lower()


COERCE: Dict[str, Callable[[Any], Any]] = {
    "family": _to_str,
    "variance": _to_float,
    "prior_alpha": _to_float,
    "prior_beta": _to_float,
    "prior_mean": _to_float,
    "prior_var": _to_float,
    "means": _to_float_list,
    "gammas": _to_float_list,
    "gamma_minus": _to_optional_float,
    "gamma_plus": _to_optional_float,
    "deltas": _to_float_list,
    "policy": _to_str,
    "reps": _to_int,
    "base_seed": _to_int,
    "max_steps": _to_int,
    "trace_stride": _to_int,
    "init_rounds": _to_int,
    "rejection_cap": _to_int,
    "epsilon_kl": _to_float,
    "r0_floor": _to_int,
    "brute_force": _to_optional_int,
    "workers": _to_int,
    "out": lambda v: None if v is None else str(v),
}


def _canonical_key(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    return ALIASES.get(key, key)


def _find_line(lines: List[str], key: str, pattern: str) -> Optional[int]:
    regex = re.compile(pattern.format(key=re.escape(key)))
    for number, text in enumerate(lines, start=1):
        if regex.search(text):
            return number
    return None


def load_config_file(path) -> Dict[str, RawValue]:
    """
    Read a config file into {key: (raw value, line number)}.

    A file starting with '{' is a JSON object; anything else is parsed as
    key = value lines with python-dotenv. Keys are normalised (lower case,
    '-' to '_', gamma/delta/seed aliases) but values are left raw.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")

    lines = text.splitlines()
    values: Dict[str, RawValue] = {}
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON: {e.msg}", str(path), e.lineno) from e
        if not isinstance(data, dict):
            raise ConfigError("The JSON config must be an object", str(path), 1)
        for key, value in data.items():
            values[_canonical_key(key)] = (value, _find_line(lines, key, r'"{key}"\s*:'))
    else:
        for key, value in dotenv_values(path).items():
            values[_canonical_key(key)] = (value, _find_line(lines, key, r"^\s*(export\s+)?{key}\s*="))

    for key, (_, line) in values.items():
        if key not in COERCE:
            raise ConfigError(f"Unknown setting '{key}'", str(path), line)
    return values


def _apply(config: ExperimentConfig, key: str, value: Any,
           source: Tuple[Optional[str], Optional[int]]) -> None:
    key = _canonical_key(key)
    if key not in COERCE:
        raise ConfigError(f"Unknown setting '{key}'", *source)
    try:
        setattr(config, key, COERCE[key](value))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Bad value for '{key}': {value!r} ({e})", *source) from e
    config.sources[key] = source


def build_config(file_values: Optional[Dict[str, RawValue]] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 preset: Optional[Dict[str, Any]] = None,
                 path: Optional[str] = None) -> ExperimentConfig:
    """Layer defaults, file values, a preset and flag overrides (None means not given)."""
    config = ExperimentConfig()
    for key, (value, line) in (file_values or {}).items():
        _apply(config, key, value, (path, line))
    for key, value in (preset or {}).items():
        _apply(config, key, value, (None, None))
    for key, value in (overrides or {}).items():
        if value is not None:
            _apply(config, key, value, (None, None))
    return config


def _fail(config: ExperimentConfig, key: str, message: str) -> None:
    path, line = config.sources.get(key, (None, None))
    raise ConfigError(message, path, line)


def validate(config: ExperimentConfig) -> None:
    """Check every precondition of the modules the config will reach; raise ConfigError."""
    try:
        Family(config.family)
    except ValueError:
        _fail(config, "family", f"Unknown family '{config.family}'")
    try:
        PolicyKind(config.policy)
    except ValueError:
        _fail(config, "policy", f"Unknown policy '{config.policy}'")

    try:
        model = config.model()
    except ChmError as e:
        key = "variance" if config.family == Family.GAUSSIAN.value else "prior_alpha"
        _fail(config, key, str(e))

    if not config.means:
        _fail(config, "means", "At least one arm mean is required")
    try:
        model.check_mean(config.means)
    except ChmError as e:
        _fail(config, "means", str(e))

    if config.is_interval:
        if config.gamma_minus is None or config.gamma_plus is None:
            _fail(config, "gamma_minus", "An interval query needs both gamma_minus and gamma_plus")
        if config.gammas:
            _fail(config, "gammas", "Give either a gamma list or an interval, not both")
    elif not config.gammas:
        _fail(config, "gammas", "The gamma list is empty")

    key = "gamma_minus" if config.is_interval else "gammas"
    try:
        config.instances()
    except ChmError as e:
        _fail(config, key, str(e))

    if config.policy == PolicyKind.TWO_PASS.value and config.is_interval:
        _fail(config, "policy", "The two-pass baseline only supports point queries")

    if not config.deltas:
        _fail(config, "deltas", "The delta list is empty")
    for delta in config.deltas:
        if not 0.0 < delta < 0.5:
            _fail(config, "deltas", f"delta must lie in (0, 0.5), got {delta}")

    minimums = {"reps": 1, "base_seed": 0, "max_steps": 1, "trace_stride": 0, "init_rounds": 0,
                "rejection_cap": 1, "r0_floor": 1, "workers": 1}
    for name, minimum in minimums.items():
        if getattr(config, name) < minimum:
            _fail(config, name, f"{name} must be at least {minimum}, got {getattr(config, name)}")
    if not config.epsilon_kl > 0:
        _fail(config, "epsilon_kl", f"epsilon_kl must be positive, got {config.epsilon_kl}")

    if config.brute_force is not None:
        if config.brute_force < MIN_BRUTE_FORCE_GRID:
            _fail(config, "brute_force", f"Brute-force grid must be at least {MIN_BRUTE_FORCE_GRID}")
        if len(config.means) > MAX_BRUTE_FORCE_ARMS:
            _fail(config, "brute_force", f"Brute force supports at most {MAX_BRUTE_FORCE_ARMS} arms")


# settings that never change a result row
_HASH_EXCLUDED = ("sources", "workers", "out")


def config_hash(config: ExperimentConfig, **point: Any) -> str:
    """16 hex digits of sha256 over the result-relevant settings plus the sweep point."""
    payload = {k: v for k, v in asdict(config).items() if k not in _HASH_EXCLUDED}
    payload["point"] = point
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
