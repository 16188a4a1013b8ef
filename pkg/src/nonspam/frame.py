"""Analysis operator and frame bounds.

analyze() is the circular convolution A_j = phi_j (*) f computed through the
DFT; dense_frame_matrix() builds the same operator explicitly and only exists
as an oracle for small grids.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import fftutil
from .errors import (
    DimensionError,
    DomainError,
    FrameDegeneracyError,
    FrameViolationError,
    NumericalError,
    ScaleGuardError,
)
from .spatial import PixelGrid, SpatioTemporalFilter

IMAG_RESIDUE_TOL = 1e-9
DENSE_ROW_LIMIT = 65536
RANDOM_PIXEL_MAX = 255.0


@dataclass
class Image:
    """A still grayscale image; pixels keep the native file scale."""

    grid: PixelGrid
    pixels: np.ndarray
    maxval: Optional[int] = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.shape != self.grid.shape:
            raise DimensionError(
                f"pixels shape {self.pixels.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise DomainError("image pixels must be finite")

    @classmethod
    def from_array(cls, pixels, maxval: Optional[int] = None) -> "Image":
        pixels = np.asarray(pixels, dtype=float)
        if pixels.ndim != 2:
            raise DimensionError(f"image must be 2D, got shape {pixels.shape}")
        return cls(PixelGrid(*pixels.shape), pixels, maxval)


@dataclass
class ActivationTensor:
    """Coefficients A(x_k, t_j), stacked as an (m, rows, cols) array."""

    grid: PixelGrid
    time_bins: List[float]
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expected = (len(self.time_bins),) + self.grid.shape
        if self.coeffs.shape != expected:
            raise DimensionError(f"coeffs shape {self.coeffs.shape}, expected {expected}")
        if not np.all(np.isfinite(self.coeffs)):
            raise DomainError("activation coefficients must be finite")

    @property
    def m(self) -> int:
        return len(self.time_bins)


@dataclass
class FrameBounds:
    alpha_paper: float
    beta_paper: float
    alpha_tight: float
    beta_tight: float

    def chain_holds(self, rel_tol: float = 1e-12) -> bool:
        """alpha_paper <= alpha_tight <= beta_tight <= beta_paper, up to round-off."""
        slack = rel_tol * self.beta_paper
        return (
            self.alpha_paper <= self.alpha_tight + slack
            and self.alpha_tight <= self.beta_tight + slack
            and self.beta_tight <= self.beta_paper + slack
        )


@dataclass
class FrameCheckReport:
    trials: int
    seed: int
    bounds: FrameBounds
    min_ratio: float
    max_ratio: float
    ratios: List[float] = field(repr=False, default_factory=list)


def _check_grid(grid: PixelGrid, phi: SpatioTemporalFilter) -> None:
    if grid != phi.grid:
        raise DimensionError(
            f"grid {grid.rows}x{grid.cols} does not match filter grid "
            f"{phi.grid.rows}x{phi.grid.cols}"
        )


def real_part_checked(values: np.ndarray) -> np.ndarray:
    """Real part of an inverse DFT, asserting the imaginary residue is negligible."""
    real = values.real
    residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
    scale = float(np.max(np.abs(real))) if values.size else 0.0
    if residue > IMAG_RESIDUE_TOL * scale and residue > 0:
        raise NumericalError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL} x {scale:.3e}"
        )
    return real


def analyze(image: Image, phi: SpatioTemporalFilter) -> ActivationTensor:
    """A(x_k, t_j) = (phi_j (*) f)(x_k), circular convolution via the DFT."""
    _check_grid(image.grid, phi)
    spectrum = fftutil.fft2(image.pixels)
    coeffs = real_part_checked(fftutil.ifft2(phi.spectra * spectrum))
    return ActivationTensor(phi.grid, list(phi.time_bins), coeffs)


def frame_bounds_paper(phi: SpatioTemporalFilter) -> Tuple[float, float]:
    """alpha = min_xi S(xi)/n and beta = sum_j sum_k sum_i phi^2(x_k - x_i, t_j).

    On the torus every k sees the same shifted kernel energy, so the triple sum
    is n * sum_j sum_x phi_j(x)^2.
    """
    n = phi.grid.n
    alpha = float(np.min(phi.aggregate_spectrum)) / n
    energy = 0.0
    for kernel in phi.kernels:
        energy += float(np.sum(kernel * kernel))
    beta = n * energy
    if alpha <= 0:
        raise FrameDegeneracyError(
            f"alpha = {alpha:.3e}: the family fails the frame condition"
        )
    return alpha, beta


def frame_bounds_tight(phi: SpatioTemporalFilter) -> Tuple[float, float]:
    """Extreme eigenvalues min S, max S of the analysis normal operator."""
    alpha = float(np.min(phi.aggregate_spectrum))
    beta = float(np.max(phi.aggregate_spectrum))
    if alpha <= 0:
        raise FrameDegeneracyError(
            f"alpha = {alpha:.3e}: the family fails the frame condition"
        )
    return alpha, beta


def frame_bounds(phi: SpatioTemporalFilter) -> FrameBounds:
    alpha_paper, beta_paper = frame_bounds_paper(phi)
    alpha_tight, beta_tight = frame_bounds_tight(phi)
    return FrameBounds(alpha_paper, beta_paper, alpha_tight, beta_tight)


def random_image(grid: PixelGrid, seed: int, trial: int = 0) -> Image:
    """Uniform [0, 255] test image from PCG64 seeded with (seed, trial)."""
    rng = np.random.Generator(np.random.PCG64([seed, trial]))
    return Image(grid, rng.uniform(0.0, RANDOM_PIXEL_MAX, size=grid.shape))


def energy_ratio(image: Image, phi: SpatioTemporalFilter) -> float:
    """sum_j sum_k |A(x_k, t_j)|^2 / ||f||^2."""
    norm = float(np.sum(image.pixels * image.pixels))
    if norm == 0:
        raise DomainError("energy ratio is undefined for the zero image")
    coeffs = analyze(image, phi).coeffs
    energy = 0.0
    for bin_coeffs in coeffs:
        energy += float(np.sum(bin_coeffs * bin_coeffs))
    return energy / norm


def frame_check(phi: SpatioTemporalFilter, trials: int, seed: int) -> FrameCheckReport:
    """Checks alpha_tight ||f||^2 <= sum |A|^2 <= beta_tight ||f||^2 on random images."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    bounds = frame_bounds(phi)
    if not bounds.chain_holds():
        raise FrameViolationError(
            "bound chain alpha_paper <= alpha_tight <= beta_tight <= beta_paper "
            f"broken: {bounds}",
            trial=-1,
        )

    slack = 1e-9 * bounds.beta_tight
    ratios = []
    for trial in range(trials):
        ratio = energy_ratio(random_image(phi.grid, seed, trial), phi)
        if not (bounds.alpha_tight - slack <= ratio <= bounds.beta_tight + slack):
            raise FrameViolationError(
                f"energy ratio {ratio:.12g} outside "
                f"[{bounds.alpha_tight:.12g}, {bounds.beta_tight:.12g}]",
                trial=trial,
            )
        ratios.append(ratio)
    return FrameCheckReport(trials, seed, bounds, min(ratios), max(ratios), ratios)


def dense_frame_matrix(phi: SpatioTemporalFilter) -> np.ndarray:
    """The (n*m, n) matrix whose row (j, k) is phi(x_k - x_i, t_j), i = 1..n."""
    grid = phi.grid
    n = grid.n
    if n * phi.m > DENSE_ROW_LIMIT:
        raise ScaleGuardError(
            f"dense frame matrix needs n*m = {n * phi.m} rows, limit {DENSE_ROW_LIMIT}"
        )
    rows, cols = np.unravel_index(np.arange(n), grid.shape)
    dr = (rows[:, None] - rows[None, :]) % grid.rows
    dc = (cols[:, None] - cols[None, :]) % grid.cols
    return np.concatenate([kernel[dr, dc] for kernel in phi.kernels], axis=0)
