"""Spatial part: the time-varying DoG phi(x, t_j) on the pixel torus.

Kernels are centered at index (0, 0) with wraparound distances, so each one
is even along both axes and its DFT is real up to round-off.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import fftutil
from .errors import DimensionError, DomainError
from .temporal import RetinaParams, TemporalWeights, asymptotic_weight


@dataclass(frozen=True)
class PixelGrid:
    rows: int
    cols: int

    def __post_init__(self):
        for name in ("rows", "cols"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise DomainError(f"{name} must be an integer >= 1, got {value}")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    def wrapped_offsets(self) -> Tuple[np.ndarray, np.ndarray]:
        """Toroidal distance of every row/column index to index 0."""
        r = np.arange(self.rows)
        c = np.arange(self.cols)
        return np.minimum(r, self.rows - r), np.minimum(c, self.cols - c)


@dataclass
class SpatioTemporalFilter:
    """Per-bin kernels phi(., t_j), their spectra and S(xi) = sum_j |phi_j(xi)|^2.

    kernels and spectra are stacked as (m, rows, cols) arrays in time_bins order.
    """

    grid: PixelGrid
    time_bins: List[float]
    kernels: np.ndarray
    spectra: np.ndarray
    aggregate_spectrum: np.ndarray

    @classmethod
    def from_kernels(
        cls, grid: PixelGrid, time_bins: List[float], kernels: np.ndarray
    ) -> "SpatioTemporalFilter":
        kernels = np.asarray(kernels, dtype=float)
        if kernels.ndim != 3 or kernels.shape[1:] != grid.shape:
            raise DimensionError(
                f"kernels must be (m, {grid.rows}, {grid.cols}), got {kernels.shape}"
            )
        if kernels.shape[0] != len(time_bins):
            raise DimensionError(
                f"{kernels.shape[0]} kernels for {len(time_bins)} time bins"
            )
        spectra = fftutil.fft2(kernels)
        aggregate = np.zeros(grid.shape, dtype=float)
        for spectrum in spectra:  # j-ascending, fixed order
            aggregate += spectrum.real**2 + spectrum.imag**2
        return cls(grid, list(time_bins), kernels, spectra, aggregate)

    @property
    def m(self) -> int:
        return len(self.time_bins)

    def restrict(self, count: int) -> "SpatioTemporalFilter":
        """The filter as seen at time t_count: its first `count` bins only."""
        if not 1 <= count <= self.m:
            raise DomainError(f"count must lie in [1, {self.m}], got {count}")
        return SpatioTemporalFilter.from_kernels(
            self.grid, self.time_bins[:count], self.kernels[:count]
        )


def eval_gaussian2d(dx, dy, sigma: float):
    """Unit-mass continuous 2D Gaussian sampled at offset (dx, dy)."""
    if not (math.isfinite(sigma) and sigma > 0):
        raise DomainError(f"sigma must be finite and > 0, got {sigma}")
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
        raise DomainError("gaussian offsets must be finite")
    value = np.exp(-(dx**2 + dy**2) / (2.0 * sigma**2)) / (2.0 * math.pi * sigma**2)
    if value.ndim == 0:
        return float(value)
    return value


def sample_kernel_grid(sigma: float, grid: PixelGrid) -> np.ndarray:
    dr, dc = grid.wrapped_offsets()
    return eval_gaussian2d(dr[:, None], dc[None, :], sigma)


def build_phi(
    params: RetinaParams, weights: TemporalWeights, grid: PixelGrid
) -> SpatioTemporalFilter:
    """phi(x, t_j) = w_C R_C(t_j) G_sigma_c(x) - w_S R_S(t_j) G_sigma_s(x)."""
    g_center = sample_kernel_grid(params.sigma_c, grid)
    g_surround = sample_kernel_grid(params.sigma_s, grid)
    kernels = np.empty((len(weights.time_bins),) + grid.shape, dtype=float)
    for j, (rc, rs) in enumerate(zip(weights.rc, weights.rs)):
        kernels[j] = (params.w_C * rc) * g_center - (params.w_S * rs) * g_surround
    return SpatioTemporalFilter.from_kernels(grid, weights.time_bins, kernels)


def dog_limit(params: RetinaParams, grid: PixelGrid) -> np.ndarray:
    """Limit kernel n!(1 - w_C) (w_C G_sigma_c - w_S G_sigma_s) as t -> inf."""
    limit = asymptotic_weight(params)
    return limit * (
        params.w_C * sample_kernel_grid(params.sigma_c, grid)
        - params.w_S * sample_kernel_grid(params.sigma_s, grid)
    )


def spectrum_cut(phi: SpatioTemporalFilter) -> Tuple[np.ndarray, np.ndarray]:
    """|phi_j| along the xi_y = 0 row, centered on DC.

    Returns (freq_index, magnitudes) with magnitudes shaped (m, cols).
    """
    cols = phi.grid.cols
    freq_index = np.arange(cols) - cols // 2
    magnitudes = np.fft.fftshift(np.abs(phi.spectra[:, 0, :]), axes=-1)
    return freq_index, magnitudes


def classify_passband(phi: SpatioTemporalFilter) -> List[str]:
    labels = []
    for spectrum in phi.spectra:
        magnitude = np.abs(spectrum)
        if not np.any(magnitude):
            labels.append("zero")
        elif np.argmax(magnitude) == 0:
            labels.append("low-pass")
        else:
            labels.append("band-pass")
    return labels
