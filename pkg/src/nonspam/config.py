"""Run configuration: a flat `key = value` file parsed with python-dotenv.

Missing keys take the reference parameter set; unknown keys are rejected.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

from dotenv import dotenv_values

from .errors import ConfigError, NonSpamError, NonSpamIOError
from .reconstruction import ReconstructionOptions
from .spatial import PixelGrid, SpatioTemporalFilter, build_phi
from .temporal import (
    DEFAULT_BIN_COUNT,
    DEFAULT_CONVERGENCE_EPS,
    DEFAULT_DT,
    DEFAULT_T_MAX,
    FineTimeGrid,
    RetinaParams,
    compute_weights,
    default_time_bins,
)

DEFAULT_SEED = 0
DEFAULT_FRAME_TRIALS = 100


@dataclass(frozen=True)
class Config:
    params: RetinaParams = field(default_factory=RetinaParams)
    dt: float = DEFAULT_DT
    t_max: float = DEFAULT_T_MAX
    m: int = DEFAULT_BIN_COUNT
    time_bins: Optional[Tuple[float, ...]] = None
    convergence_eps: float = DEFAULT_CONVERGENCE_EPS
    reconstruction: ReconstructionOptions = field(default_factory=ReconstructionOptions)
    seed: int = DEFAULT_SEED
    frame_trials: int = DEFAULT_FRAME_TRIALS

    def time_grid(self) -> FineTimeGrid:
        return FineTimeGrid(self.dt, self.t_max)

    def resolve_time_bins(self) -> List[float]:
        """Explicit time_bins if configured, else m bins up to the convergence time."""
        if self.time_bins is not None:
            return list(self.time_bins)
        return default_time_bins(
            self.params, self.time_grid(), self.m, self.convergence_eps
        )

    def build_filter(
        self, grid: PixelGrid, time_bins: Optional[List[float]] = None
    ) -> SpatioTemporalFilter:
        bins = self.resolve_time_bins() if time_bins is None else time_bins
        weights = compute_weights(self.params, self.time_grid(), bins)
        return build_phi(self.params, weights, grid)


def _parse_int(raw: str) -> int:
    value = float(raw)
    if not value.is_integer():
        raise ValueError(f"{raw!r} is not an integer")
    return int(value)


def _parse_float(raw: str) -> float:
    value = float(raw)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


def _parse_float_list(raw: str) -> Tuple[float, ...]:
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(_parse_float(item) for item in items)


def _parse_step(raw: str):
    return "auto" if raw.strip() == "auto" else _parse_float(raw)


PARAM_PARSERS: Dict[str, Callable[[str], object]] = {
    "tau_C": _parse_float,
    "tau_S": _parse_float,
    "tau_G": _parse_float,
    "gamma_order_n": _parse_int,
    "w_C": _parse_float,
    "w_S": _parse_float,
    "sigma_c": _parse_float,
    "sigma_s": _parse_float,
}
RUN_PARSERS: Dict[str, Callable[[str], object]] = {
    "dt": _parse_float,
    "t_max": _parse_float,
    "m": _parse_int,
    "time_bins": _parse_float_list,
    "convergence_eps": _parse_float,
    "seed": _parse_int,
    "frame_trials": _parse_int,
}
SOLVER_PARSERS: Dict[str, Callable[[str], object]] = {
    "mode": str.strip,
    "mask_semantics": str.strip,
    "step_size": _parse_step,
    "max_iters": _parse_int,
    "grad_tol": _parse_float,
    "init": str.strip,
}
KNOWN_KEYS = {**PARAM_PARSERS, **RUN_PARSERS, **SOLVER_PARSERS}


def parse_config(values: Dict[str, Optional[str]], source: str = "<config>") -> Config:
    """Builds a Config from raw string values keyed by field name."""
    unknown = sorted(set(values) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")

    parsed = {}
    for key, raw in values.items():
        if raw is None or not raw.strip():
            raise ConfigError(f"{source}: key {key!r} has no value")
        try:
            parsed[key] = KNOWN_KEYS[key](raw)
        except ValueError as e:
            raise ConfigError(f"{source}: bad value for {key!r}: {raw!r} ({e})") from e

    try:
        params = RetinaParams(**{k: v for k, v in parsed.items() if k in PARAM_PARSERS})
        solver = ReconstructionOptions(
            **{k: v for k, v in parsed.items() if k in SOLVER_PARSERS}
        )
    except NonSpamError as e:
        raise ConfigError(f"{source}: {e}") from e

    run = {k: v for k, v in parsed.items() if k in RUN_PARSERS}
    if run.get("m", DEFAULT_BIN_COUNT) < 1:
        raise ConfigError(f"{source}: m must be >= 1")
    if run.get("frame_trials", DEFAULT_FRAME_TRIALS) < 1:
        raise ConfigError(f"{source}: frame_trials must be >= 1")
    if run.get("seed", DEFAULT_SEED) < 0:
        raise ConfigError(f"{source}: seed must be >= 0")
    config = Config(params=params, reconstruction=solver, **run)
    try:
        config.time_grid()
    except NonSpamError as e:
        raise ConfigError(f"{source}: {e}") from e
    return config


def load_config(path: Optional[str] = None) -> Config:
    """Reads a config file; None gives the defaults."""
    if path is None:
        return Config()
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = dotenv_values(stream=f, interpolate=False)
    except OSError as e:
        raise NonSpamIOError(f"cannot read config {path}: {e}") from e
    return parse_config(dict(values), source=path)


def with_seed(config: Config, seed: Optional[int]) -> Config:
    return config if seed is None else replace(config, seed=seed)
