"""Temporal part of the non-SPAM filter.

Gamma/exponential kernels, the center kernel T(t), the delayed surround kernel
(T * E_tau_S)(t) and their running integrals R_C, R_S, all sampled on a fine
uniform time grid starting at t = 0.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    NotConvergedError,
    PrecisionError,
    RangeError,
)

# Reference parameter set (seconds / pixels)
DEFAULT_TAU_C = 0.020
DEFAULT_TAU_S = 0.004
DEFAULT_TAU_G = 0.005
DEFAULT_W_C = 0.75
DEFAULT_W_S = 1.0
DEFAULT_SIGMA_C = 0.5
DEFAULT_SIGMA_S = 1.5
DEFAULT_GAMMA_ORDER = 0

DEFAULT_DT = 1e-4
DEFAULT_T_MAX = 0.5
DEFAULT_BIN_COUNT = 5
DEFAULT_CONVERGENCE_EPS = 1e-3

# dt must resolve the smallest time constant with at least this many samples
MIN_SAMPLES_PER_TAU = 10


@dataclass(frozen=True)
class RetinaParams:
    """Scalar constants of the non-SPAM filter."""

    tau_C: float = DEFAULT_TAU_C
    tau_S: float = DEFAULT_TAU_S
    tau_G: float = DEFAULT_TAU_G
    gamma_order_n: int = DEFAULT_GAMMA_ORDER
    w_C: float = DEFAULT_W_C
    w_S: float = DEFAULT_W_S
    sigma_c: float = DEFAULT_SIGMA_C
    sigma_s: float = DEFAULT_SIGMA_S

    def __post_init__(self):
        for name in ("tau_C", "tau_S", "tau_G", "sigma_c", "sigma_s"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {value}")
        for name in ("w_C", "w_S"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite, got {getattr(self, name)}")
        n = self.gamma_order_n
        if isinstance(n, bool) or int(n) != n or n < 0:
            raise DomainError(f"gamma_order_n must be a non-negative integer, got {n}")
        if self.w_C == 1:
            warnings.warn(
                "w_C = 1: the asymptotic DoG weight n!(1 - w_C) vanishes, "
                "the filter decays to zero",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def min_tau(self) -> float:
        return min(self.tau_C, self.tau_S, self.tau_G)


@dataclass(frozen=True)
class FineTimeGrid:
    """Uniform quadrature grid t_k = k*dt on [0, t_max]."""

    dt: float = DEFAULT_DT
    t_max: float = DEFAULT_T_MAX

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be finite and > 0, got {self.dt}")
        if not (math.isfinite(self.t_max) and self.t_max >= self.dt):
            raise DomainError(f"t_max must be >= dt, got t_max={self.t_max}")

    @property
    def samples(self) -> int:
        # floor(t_max/dt) without losing a sample to 0.5/1e-4 = 4999.999...
        q = self.t_max / self.dt
        k = round(q)
        if abs(q - k) > 1e-9 * max(1.0, q):
            k = math.floor(q)
        return int(k) + 1

    def times(self) -> np.ndarray:
        return np.arange(self.samples, dtype=float) * self.dt

    @property
    def horizon(self) -> float:
        return (self.samples - 1) * self.dt


@dataclass
class TemporalWeights:
    """R_C(t_j) and R_S(t_j) sampled on the coarse time bins."""

    time_bins: List[float]
    rc: List[float]
    rs: List[float]

    def __post_init__(self):
        if not (len(self.time_bins) == len(self.rc) == len(self.rs)):
            raise DimensionError(
                f"time_bins, rc and rs lengths differ: "
                f"{len(self.time_bins)}, {len(self.rc)}, {len(self.rs)}"
            )
        if not (np.all(np.isfinite(self.rc)) and np.all(np.isfinite(self.rs))):
            raise DomainError("temporal weights must be finite")

    def scaled(self, factor: float) -> "TemporalWeights":
        return TemporalWeights(
            list(self.time_bins),
            [factor * v for v in self.rc],
            [factor * v for v in self.rs],
        )


@dataclass
class TemporalProfile:
    """Everything the temporal stage computes on the fine grid."""

    times: np.ndarray
    T: np.ndarray
    TS: np.ndarray
    RC: np.ndarray = field(repr=False)
    RS: np.ndarray = field(repr=False)


def eval_gamma(
    t: Union[float, np.ndarray], tau: float, n: int
) -> Union[float, np.ndarray]:
    """Gamma temporal kernel E_{tau,n}(t) = t^n exp(-t/tau) / tau^(n+1).

    Causal: exactly 0 for t < 0. Accepts a scalar or an array of times.
    """
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)) or not math.isfinite(tau):
        raise DomainError("eval_gamma needs finite t and tau")
    if tau <= 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    if int(n) != n or n < 0:
        raise DomainError(f"gamma order must be a non-negative integer, got {n}")

    causal = t_arr >= 0
    tc = np.where(causal, t_arr, 0.0)
    values = np.where(causal, tc**n * np.exp(-tc / tau) / tau ** (n + 1), 0.0)
    if np.ndim(t) == 0:
        return float(values)
    return values


def _derivative(y: np.ndarray, dt: float) -> np.ndarray:
    return np.gradient(y, dt, edge_order=2 if len(y) > 2 else 1)


def causal_convolve(f: np.ndarray, g: np.ndarray, dt: float) -> np.ndarray:
    """(f * g)(t_i) = integral_0^t_i f(s) g(t_i - s) ds for causal f, g.

    Trapezoidal rule over [0, t_i] with the Euler-Maclaurin end correction
    -dt^2/12 * [h'(t_i) - h'(0)], h(s) = f(s) g(t_i - s). The sum order is
    fixed by np.convolve, so results are bit-stable.
    """
    if len(f) != len(g):
        raise DimensionError(f"sequence lengths differ: {len(f)} vs {len(g)}")
    count = len(f)
    full = np.convolve(f, g)[:count]
    trap = dt * (full - 0.5 * (f[0] * g + f * g[0]))

    df = _derivative(f, dt)
    dg = _derivative(g, dt)
    slope_end = df * g[0] - f * dg[0]
    slope_start = df[0] * g - f[0] * dg
    return trap - dt**2 / 12.0 * (slope_end - slope_start)


def cumulative_integral(y: np.ndarray, dt: float) -> np.ndarray:
    """Running integral of y from 0, end-corrected trapezoid; value 0 at t_0."""
    cum = np.empty(len(y), dtype=float)
    cum[0] = 0.0
    cum[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
    dy = _derivative(y, dt)
    return cum - dt**2 / 12.0 * (dy - dy[0])


def check_resolution(params: RetinaParams, grid: FineTimeGrid) -> None:
    if grid.dt > params.min_tau / MIN_SAMPLES_PER_TAU:
        raise PrecisionError(
            f"dt={grid.dt} is too coarse for min(tau)={params.min_tau}; "
            f"need dt <= {params.min_tau / MIN_SAMPLES_PER_TAU}"
        )


def eval_center_T(params: RetinaParams, grid: FineTimeGrid) -> np.ndarray:
    """Center temporal kernel T = E_{tau_G,n} * (delta_0 - w_C E_{tau_C}).

    The delta term is the identity of convolution, so
    T = E_{tau_G,n} - w_C (E_{tau_G,n} * E_{tau_C}).
    """
    check_resolution(params, grid)
    t = grid.times()
    eg = eval_gamma(t, params.tau_G, params.gamma_order_n)
    ec = eval_gamma(t, params.tau_C, 0)
    return eg - params.w_C * causal_convolve(eg, ec, grid.dt)


def eval_surround_temporal(
    T_samples: Sequence[float], params: RetinaParams, grid: FineTimeGrid
) -> np.ndarray:
    """Delayed surround kernel (T * E_{tau_S})(t) on the same grid as T."""
    T_arr = np.asarray(T_samples, dtype=float)
    if T_arr.shape != (grid.samples,):
        raise DimensionError(
            f"T has {T_arr.size} samples, grid has {grid.samples}"
        )
    es = eval_gamma(grid.times(), params.tau_S, 0)
    return causal_convolve(T_arr, es, grid.dt)


def integrate_weights(
    T_samples: Sequence[float],
    TS_samples: Sequence[float],
    grid: FineTimeGrid,
    time_bins: Sequence[float],
) -> TemporalWeights:
    """R_C(t_j), R_S(t_j): running integrals of T and T*E_tau_S at the bins.

    Bins that fall between grid points are linearly interpolated between the
    neighbouring cumulative values.
    """
    T_arr = np.asarray(T_samples, dtype=float)
    TS_arr = np.asarray(TS_samples, dtype=float)
    if T_arr.shape != (grid.samples,) or TS_arr.shape != (grid.samples,):
        raise DimensionError("T and TS must be sampled on the given grid")

    bins = np.asarray(time_bins, dtype=float)
    if bins.ndim != 1 or bins.size == 0:
        raise DomainError("time_bins must be a non-empty list")
    if np.any(np.diff(bins) <= 0):
        raise DomainError("time_bins must be strictly increasing")
    limit = grid.horizon * (1 + 1e-12)
    if bins[0] < 0 or bins[-1] > limit:
        raise RangeError(
            f"time_bins must lie in [0, {grid.horizon}], got "
            f"[{bins[0]}, {bins[-1]}]"
        )

    t = grid.times()
    rc = np.interp(bins, t, cumulative_integral(T_arr, grid.dt))
    rs = np.interp(bins, t, cumulative_integral(TS_arr, grid.dt))
    return TemporalWeights(bins.tolist(), rc.tolist(), rs.tolist())


def asymptotic_weight(params: RetinaParams) -> float:
    """Common limit n!(1 - w_C) of R_C and R_S."""
    return math.factorial(params.gamma_order_n) * (1.0 - params.w_C)


def temporal_profile(params: RetinaParams, grid: FineTimeGrid) -> TemporalProfile:
    T = eval_center_T(params, grid)
    TS = eval_surround_temporal(T, params, grid)
    return TemporalProfile(
        times=grid.times(),
        T=T,
        TS=TS,
        RC=cumulative_integral(T, grid.dt),
        RS=cumulative_integral(TS, grid.dt),
    )


def convergence_time(params: RetinaParams, grid: FineTimeGrid, eps: float) -> float:
    """First grid time where both R_C and R_S are within eps*|L| of L.

    L is asymptotic_weight(params). Raises NotConvergedError carrying the
    relative residual reached at the horizon when no grid time qualifies.
    """
    if not (math.isfinite(eps) and eps > 0):
        raise DomainError(f"eps must be > 0, got {eps}")
    limit = asymptotic_weight(params)
    if limit == 0:
        raise DomainError("asymptotic weight is 0 (w_C = 1); nothing to converge to")

    profile = temporal_profile(params, grid)
    residual = np.maximum(np.abs(profile.RC - limit), np.abs(profile.RS - limit))
    hits = np.flatnonzero(residual <= eps * abs(limit))
    if hits.size == 0:
        raise NotConvergedError(
            f"R_C/R_S not within eps={eps} of {limit} by t_max={grid.t_max}",
            residual=float(residual[-1] / abs(limit)),
        )
    return float(profile.times[hits[0]])


def default_time_bins(
    params: RetinaParams,
    grid: FineTimeGrid,
    m: int = DEFAULT_BIN_COUNT,
    eps: float = DEFAULT_CONVERGENCE_EPS,
) -> List[float]:
    """m bins uniformly spaced on (0, dt_conv], dt_conv = convergence_time(eps)."""
    if m < 1:
        raise DomainError(f"bin count must be >= 1, got {m}")
    delta = convergence_time(params, grid, eps)
    if delta == 0:
        delta = grid.dt
    return [delta * j / m for j in range(1, m + 1)]


def compute_weights(
    params: RetinaParams, grid: FineTimeGrid, time_bins: Sequence[float]
) -> TemporalWeights:
    T = eval_center_T(params, grid)
    TS = eval_surround_temporal(T, params, grid)
    return integrate_weights(T, TS, grid, time_bins)
