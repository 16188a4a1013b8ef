"""Synthesis: dual-frame solve, masked least squares, ROC selection, MSE.

All solvers work on the circular model, where the analysis normal operator
is diagonal in the DFT basis with eigenvalues S(xi) = sum_j |phi_j(xi)|^2.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import fftutil
from .errors import (
    ConvergenceWarning,
    DimensionError,
    DomainError,
    IllConditionedFrameError,
    NonSpamError,
)
from .frame import ActivationTensor, Image, analyze, real_part_checked
from .spatial import SpatioTemporalFilter

MODES = ("fourier-dual", "gradient-descent")
MASK_SEMANTICS = ("masked-objective", "zero-fill")
INITS = ("zeros", "dc-estimate")

ILL_CONDITIONED_RATIO = 1e-12
DEFAULT_MAX_ITERS = 5000
DEFAULT_GRAD_TOL = 1e-10
DEFAULT_TEMPORAL_RCOND = 1e-10


@dataclass
class CoefficientMask:
    """Per-bin selection of coefficients, stacked as an (m, rows, cols) bool array."""

    selected: np.ndarray
    percentage: float

    @property
    def is_full(self) -> bool:
        return bool(np.all(self.selected))

    def counts(self) -> List[int]:
        return [int(np.count_nonzero(s)) for s in self.selected]


@dataclass(frozen=True)
class ReconstructionOptions:
    mode: str = "gradient-descent"
    mask_semantics: str = "masked-objective"
    step_size: Union[str, float] = "auto"
    max_iters: int = DEFAULT_MAX_ITERS
    grad_tol: float = DEFAULT_GRAD_TOL
    init: str = "zeros"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mask_semantics not in MASK_SEMANTICS:
            raise DomainError(
                f"mask_semantics must be one of {MASK_SEMANTICS}, "
                f"got {self.mask_semantics!r}"
            )
        if self.init not in INITS:
            raise DomainError(f"init must be one of {INITS}, got {self.init!r}")
        if self.step_size != "auto":
            if isinstance(self.step_size, str) or not (
                math.isfinite(self.step_size) and self.step_size > 0
            ):
                raise DomainError(
                    f"step_size must be 'auto' or a positive number, got {self.step_size!r}"
                )
        if isinstance(self.max_iters, bool) or int(self.max_iters) != self.max_iters:
            raise DomainError(f"max_iters must be an integer, got {self.max_iters!r}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (math.isfinite(self.grad_tol) and self.grad_tol > 0):
            raise DomainError(f"grad_tol must be > 0, got {self.grad_tol}")


@dataclass
class ReconstructionResult:
    image: Image
    iterations: int
    converged: bool
    objective_trace: List[float] = field(default_factory=list, repr=False)
    grad_norm_trace: List[float] = field(default_factory=list, repr=False)


@dataclass
class CurvePoint:
    percentage: float
    mse: float
    iterations: int
    converged: bool
    error: Optional[str] = None
    image: Optional[Image] = field(default=None, repr=False)

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ProgressiveCurve:
    points: List[CurvePoint]

    def pairs(self) -> List[Tuple[float, float]]:
        return [(p.percentage, p.mse) for p in self.points]


def _check_acts(acts: ActivationTensor, phi: SpatioTemporalFilter) -> None:
    if acts.grid != phi.grid:
        raise DimensionError(
            f"coefficient grid {acts.grid.shape} does not match filter grid {phi.grid.shape}"
        )
    if acts.m != phi.m:
        raise DimensionError(f"{acts.m} coefficient bins for a {phi.m}-bin filter")


def _check_mask(mask: CoefficientMask, acts: ActivationTensor) -> None:
    if mask.selected.shape != acts.coeffs.shape:
        raise DimensionError(
            f"mask shape {mask.selected.shape} does not match coefficients "
            f"{acts.coeffs.shape}"
        )


def dual_solve(
    acts: ActivationTensor, phi: SpatioTemporalFilter, rcond: Optional[float] = None
) -> Image:
    """f = (Phi^T Phi)^-1 Phi^T A, computed as sum_j conj(phi_j) A_j / S per frequency.

    With rcond set, frequencies where S <= rcond * max S are dropped instead of
    raising (Fourier pseudo-inverse).
    """
    _check_acts(acts, phi)
    aggregate = phi.aggregate_spectrum
    s_max = float(np.max(aggregate))
    backprojected = np.sum(np.conj(phi.spectra) * fftutil.fft2(acts.coeffs), axis=0)

    if rcond is None:
        if float(np.min(aggregate)) < ILL_CONDITIONED_RATIO * s_max or s_max == 0:
            raise IllConditionedFrameError(
                f"min S = {float(np.min(aggregate)):.3e} is below "
                f"{ILL_CONDITIONED_RATIO} x max S = {s_max:.3e}"
            )
        spectrum = backprojected / aggregate
    else:
        keep = aggregate > rcond * s_max
        spectrum = np.zeros_like(backprojected)
        spectrum[keep] = backprojected[keep] / aggregate[keep]
    return Image(acts.grid, real_part_checked(fftutil.ifft2(spectrum)))


def objective_and_gradient(
    f: Image,
    acts: ActivationTensor,
    mask: Optional[CoefficientMask],
    phi: SpatioTemporalFilter,
) -> Tuple[float, Image]:
    """Value and gradient of sum_j ||mask_j . (phi_j (*) f - A_j)||^2.

    The adjoint of circular convolution by phi_j is convolution by its
    reflection, i.e. multiplication by conj(phi_j) in the DFT domain.
    mask=None means every coefficient counts.
    """
    _check_acts(acts, phi)
    if f.grid != phi.grid:
        raise DimensionError("image grid does not match filter grid")
    if mask is not None:
        _check_mask(mask, acts)

    predicted = fftutil.ifft2(phi.spectra * fftutil.fft2(f.pixels)).real
    residual = predicted - acts.coeffs
    if mask is not None:
        residual = np.where(mask.selected, residual, 0.0)

    value = 0.0
    for bin_residual in residual:
        value += float(np.sum(bin_residual * bin_residual))
    adjoint = np.sum(np.conj(phi.spectra) * fftutil.fft2(residual), axis=0)
    gradient = 2.0 * fftutil.ifft2(adjoint).real
    return value, Image(f.grid, gradient)


def _initial_image(
    acts: ActivationTensor, mask: Optional[CoefficientMask], phi, init: str
) -> np.ndarray:
    pixels = np.zeros(phi.grid.shape)
    if init == "zeros":
        return pixels
    # dc-estimate: mean(A_1) = DC(phi_1) * mean(f) for a constant image
    dc = float(phi.spectra[0, 0, 0].real)
    first = acts.coeffs[0]
    if mask is not None:
        selected = mask.selected[0]
        if not np.any(selected):
            return pixels
        mean = float(np.mean(first[selected]))
    else:
        mean = float(np.mean(first))
    if dc == 0:
        return pixels
    return pixels + mean / dc


def masked_least_squares(
    acts: ActivationTensor,
    mask: Optional[CoefficientMask],
    phi: SpatioTemporalFilter,
    opts: ReconstructionOptions,
) -> ReconstructionResult:
    """Gradient descent on the (masked) least-squares objective.

    The step "auto" is 1/(2 beta_tight): the objective's curvature is at most
    2 max S. Stops when ||grad||_inf <= grad_tol (1 + max|A|) or after
    max_iters updates; the last iterate is returned either way, with a
    ConvergenceWarning when the tolerance was not reached.
    """
    _check_acts(acts, phi)
    if mask is not None:
        _check_mask(mask, acts)

    coeffs = acts.coeffs
    objective_mask = mask
    if mask is not None and opts.mask_semantics == "zero-fill":
        coeffs = np.where(mask.selected, coeffs, 0.0)
        objective_mask = None
    if objective_mask is not None and objective_mask.is_full:
        objective_mask = None
    target = ActivationTensor(acts.grid, list(acts.time_bins), coeffs)

    beta = float(np.max(phi.aggregate_spectrum))
    if opts.step_size == "auto":
        if beta == 0:
            raise IllConditionedFrameError("max S = 0: the filter is identically zero")
        step = 1.0 / (2.0 * beta)
    else:
        step = float(opts.step_size)
    threshold = opts.grad_tol * (1.0 + float(np.max(np.abs(coeffs))))

    pixels = _initial_image(target, objective_mask, phi, opts.init)
    if objective_mask is None:
        result = _descend_diagonal(target, phi, pixels, step, threshold, opts.max_iters)
    else:
        result = _descend_spatial(
            target, objective_mask, phi, pixels, step, threshold, opts.max_iters
        )
    if not result.converged:
        warnings.warn(
            f"gradient descent stopped after {result.iterations} iterations without "
            f"converging (gradient norm {result.grad_norm_trace[-1]:.3e}, "
            f"tolerance {threshold:.3e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return result


def _descend_spatial(
    target: ActivationTensor,
    mask: CoefficientMask,
    phi: SpatioTemporalFilter,
    pixels: np.ndarray,
    step: float,
    threshold: float,
    max_iters: int,
) -> ReconstructionResult:
    f = Image(phi.grid, pixels)
    value, gradient = objective_and_gradient(f, target, mask, phi)
    grad_norm = float(np.max(np.abs(gradient.pixels)))
    objective_trace = [value]
    grad_norm_trace = [grad_norm]
    iterations = 0
    while grad_norm > threshold and iterations < max_iters:
        f = Image(phi.grid, f.pixels - step * gradient.pixels)
        value, gradient = objective_and_gradient(f, target, mask, phi)
        grad_norm = float(np.max(np.abs(gradient.pixels)))
        objective_trace.append(value)
        grad_norm_trace.append(grad_norm)
        iterations += 1
    return ReconstructionResult(
        f, iterations, grad_norm <= threshold, objective_trace, grad_norm_trace
    )


def _descend_diagonal(
    target: ActivationTensor,
    phi: SpatioTemporalFilter,
    pixels: np.ndarray,
    step: float,
    threshold: float,
    max_iters: int,
) -> ReconstructionResult:
    """Unmasked descent carried out on the DFT of the iterate.

    Same iterates as the spatial loop: the gradient is 2 (S F - B) with
    B = sum_j conj(phi_j) A_j, and the objective follows from Parseval.
    """
    n = phi.grid.n
    coeff_spectra = fftutil.fft2(target.coeffs)
    backprojected = np.sum(np.conj(phi.spectra) * coeff_spectra, axis=0)
    aggregate = phi.aggregate_spectrum
    spectrum = fftutil.fft2(pixels)

    def evaluate(current):
        misfit = phi.spectra * current - coeff_spectra
        value = 0.0
        for bin_misfit in misfit:
            value += float(np.sum(bin_misfit.real**2 + bin_misfit.imag**2)) / n
        gradient_spectrum = 2.0 * (aggregate * current - backprojected)
        grad_norm = float(np.max(np.abs(fftutil.ifft2(gradient_spectrum).real)))
        return value, gradient_spectrum, grad_norm

    value, gradient_spectrum, grad_norm = evaluate(spectrum)
    objective_trace = [value]
    grad_norm_trace = [grad_norm]
    iterations = 0
    while grad_norm > threshold and iterations < max_iters:
        spectrum = spectrum - step * gradient_spectrum
        value, gradient_spectrum, grad_norm = evaluate(spectrum)
        objective_trace.append(value)
        grad_norm_trace.append(grad_norm)
        iterations += 1

    if iterations == 0:
        result = pixels
    else:
        result = real_part_checked(fftutil.ifft2(spectrum))
    return ReconstructionResult(
        Image(phi.grid, result),
        iterations,
        grad_norm <= threshold,
        objective_trace,
        grad_norm_trace,
    )


def _coefficient_count(percentage: float, n: int) -> int:
    # round half away from zero, at least one coefficient per bin
    return min(n, max(1, math.floor(percentage / 100.0 * n + 0.5)))


def roc_select(acts: ActivationTensor, percentage: float) -> CoefficientMask:
    """Rank-order selection: per bin, the top |A| coefficients.

    Ties go to the smaller row-major index (stable sort).
    """
    if not (math.isfinite(percentage) and 0 < percentage <= 100):
        raise DomainError(f"percentage must lie in (0, 100], got {percentage}")
    n = acts.grid.n
    count = _coefficient_count(percentage, n)
    selected = np.zeros((acts.m, n), dtype=bool)
    for j, bin_coeffs in enumerate(acts.coeffs.reshape(acts.m, n)):
        order = np.argsort(-np.abs(bin_coeffs), kind="stable")
        selected[j, order[:count]] = True
    return CoefficientMask(selected.reshape(acts.coeffs.shape), float(percentage))


def mse(f: Image, fhat: Image) -> float:
    """||f - fhat||^2 / n."""
    if f.grid != fhat.grid:
        raise DimensionError(f"grids differ: {f.grid.shape} vs {fhat.grid.shape}")
    diff = f.pixels - fhat.pixels
    return float(np.sum(diff * diff)) / f.grid.n


def reconstruct(
    acts: ActivationTensor,
    mask: Optional[CoefficientMask],
    phi: SpatioTemporalFilter,
    opts: ReconstructionOptions,
) -> ReconstructionResult:
    """Dispatches on opts.mode.

    fourier-dual is exact and needs a full mask or zero-fill semantics.
    """
    if opts.mode == "gradient-descent":
        return masked_least_squares(acts, mask, phi, opts)

    if mask is None or mask.is_full:
        source = acts
    elif opts.mask_semantics == "zero-fill":
        _check_mask(mask, acts)
        source = ActivationTensor(
            acts.grid, list(acts.time_bins), np.where(mask.selected, acts.coeffs, 0.0)
        )
    else:
        raise DomainError(
            "fourier-dual has no closed form for a partial mask under "
            "masked-objective semantics; use gradient-descent or zero-fill"
        )
    return ReconstructionResult(dual_solve(source, phi), 0, True)


def progressive_reconstruct(
    image: Image,
    phi: SpatioTemporalFilter,
    percentages: Sequence[float],
    opts: ReconstructionOptions,
    keep_images: bool = False,
) -> ProgressiveCurve:
    """MSE of ROC-ordered reconstructions at each percentage.

    A solver failure at one percentage is recorded on that point only.
    """
    values = [float(p) for p in percentages]
    if not values:
        raise DomainError("at least one percentage is required")
    for p in values:
        if not (math.isfinite(p) and 0 < p <= 100):
            raise DomainError(f"percentage must lie in (0, 100], got {p}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise DomainError("percentages must be strictly ascending")

    acts = analyze(image, phi)
    points = []
    for p in values:
        try:
            mask = roc_select(acts, p)
            result = reconstruct(acts, mask, phi, opts)
        except NonSpamError as e:
            points.append(CurvePoint(p, float("nan"), 0, False, error=str(e)))
            continue
        points.append(
            CurvePoint(
                p,
                mse(image, result.image),
                result.iterations,
                result.converged,
                image=result.image if keep_images else None,
            )
        )
    return ProgressiveCurve(points)


def temporal_progression(
    image: Image,
    phi: SpatioTemporalFilter,
    rcond: float = DEFAULT_TEMPORAL_RCOND,
) -> List[Tuple[float, int, float]]:
    """(t_j, j, mse) of the reconstruction from the first j bins, j = 1..m.

    Early decoders can be rank-deficient, so the solve is the Fourier
    pseudo-inverse with the given rcond.
    """
    rows = []
    for count in range(1, phi.m + 1):
        partial = phi.restrict(count)
        estimate = dual_solve(analyze(image, partial), partial, rcond=rcond)
        rows.append((partial.time_bins[-1], count, mse(image, estimate)))
    return rows
