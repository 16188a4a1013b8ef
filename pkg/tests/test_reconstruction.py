import numpy as np
import pytest

from nonspam.config import Config
from nonspam.errors import (
    ConvergenceWarning,
    DimensionError,
    DomainError,
    IllConditionedFrameError,
)
from nonspam.frame import ActivationTensor, Image, analyze, dense_frame_matrix
from nonspam.pgm import read_pgm
from nonspam.reconstruction import (
    CoefficientMask,
    ReconstructionOptions,
    dual_solve,
    masked_least_squares,
    mse,
    objective_and_gradient,
    progressive_reconstruct,
    reconstruct,
    roc_select,
    temporal_progression,
)
from nonspam.spatial import PixelGrid, SpatioTemporalFilter

PERCENTAGES = [20, 40, 60, 80, 100]


def relative_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    return float(np.linalg.norm(estimate - reference) / np.linalg.norm(reference))


def flip_convolve(kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    """sum_y kernel(y) values(x + y): convolution by the reflected kernel."""
    out = np.zeros_like(values)
    for (r, c), weight in np.ndenumerate(kernel):
        out += weight * np.roll(values, (-r, -c), axis=(0, 1))
    return out


def assert_non_increasing(values, slack=0.005, floor=0.0):
    for before, after in zip(values, values[1:]):
        assert after <= before * (1 + slack) + floor


def test_options_validation():
    ReconstructionOptions(step_size=0.1, init="dc-estimate", mask_semantics="zero-fill")
    with pytest.raises(DomainError):
        ReconstructionOptions(mode="newton")
    with pytest.raises(DomainError):
        ReconstructionOptions(mask_semantics="ignore")
    with pytest.raises(DomainError):
        ReconstructionOptions(step_size=-1.0)
    with pytest.raises(DomainError):
        ReconstructionOptions(step_size="fast")
    with pytest.raises(DomainError):
        ReconstructionOptions(max_iters=0)
    with pytest.raises(DomainError):
        ReconstructionOptions(grad_tol=0.0)
    with pytest.raises(DomainError):
        ReconstructionOptions(init="random")


def test_perfect_reconstruction_on_corpus(corpus):
    config = Config()
    for name, path in corpus.items():
        image = read_pgm(path)
        phi = config.build_filter(image.grid)
        estimate = dual_solve(analyze(image, phi), phi)
        energy = float(np.mean(image.pixels**2))
        assert mse(image, estimate) <= 1e-10 * energy, name


def test_dual_solve_matches_pseudo_inverse(filter8, random8):
    acts = analyze(random8, filter8)
    expected = np.linalg.pinv(dense_frame_matrix(filter8)) @ acts.coeffs.ravel()
    estimate = dual_solve(acts, filter8)
    np.testing.assert_allclose(estimate.pixels.ravel(), expected, rtol=0, atol=1e-8 * 255)


def test_dual_solve_of_inconsistent_coefficients_is_least_squares(filter8):
    rng = np.random.Generator(np.random.PCG64(3))
    coeffs = rng.normal(size=(3, 8, 8))
    acts = ActivationTensor(PixelGrid(8, 8), filter8.time_bins, coeffs)
    expected = np.linalg.lstsq(dense_frame_matrix(filter8), coeffs.ravel(), rcond=None)[0]
    np.testing.assert_allclose(dual_solve(acts, filter8).pixels.ravel(), expected, atol=1e-8)


def test_dual_solve_rejects_degenerate_filter():
    phi = Config(time_bins=(0.0,)).build_filter(PixelGrid(4, 4))
    acts = ActivationTensor(PixelGrid(4, 4), [0.0], np.zeros((1, 4, 4)))
    with pytest.raises(IllConditionedFrameError):
        dual_solve(acts, phi)


def test_dual_solve_pseudo_inverse_drops_dead_frequencies(filter8, random8):
    first = filter8.restrict(1)
    acts = analyze(random8, first)
    estimate = dual_solve(acts, first, rcond=1e-10)
    scale = np.max(np.abs(acts.coeffs))
    np.testing.assert_allclose(analyze(estimate, first).coeffs, acts.coeffs, atol=1e-4 * scale)


def test_dual_solve_checks_dimensions(filter8):
    acts = ActivationTensor(PixelGrid(4, 4), [0.1], np.zeros((1, 4, 4)))
    with pytest.raises(DimensionError):
        dual_solve(acts, filter8)


def test_objective_vanishes_at_the_dual_solution(filter8, random8):
    acts = analyze(random8, filter8)
    value, gradient = objective_and_gradient(dual_solve(acts, filter8), acts, None, filter8)
    norm = np.max(np.abs(acts.coeffs))
    assert value <= 1e-12 * np.sum(acts.coeffs**2)
    assert np.max(np.abs(gradient.pixels)) <= 1e-6 * norm


def test_gradient_matches_finite_differences(filter8, random8):
    rng = np.random.Generator(np.random.PCG64(21))
    target = Image.from_array(rng.uniform(0.0, 255.0, size=(8, 8)))
    acts = analyze(target, filter8)
    mask = roc_select(acts, 50)
    f = random8
    _, gradient = objective_and_gradient(f, acts, mask, filter8)
    h = 1e-3 * np.max(np.abs(f.pixels))
    for flat in rng.choice(64, size=10, replace=False):
        index = np.unravel_index(flat, (8, 8))
        up = f.pixels.copy()
        down = f.pixels.copy()
        up[index] += h
        down[index] -= h
        value_up, _ = objective_and_gradient(Image.from_array(up), acts, mask, filter8)
        value_down, _ = objective_and_gradient(Image.from_array(down), acts, mask, filter8)
        estimate = (value_up - value_down) / (2 * h)
        analytic = gradient.pixels[index]
        assert abs(estimate - analytic) <= 1e-5 * max(abs(analytic), 1.0)


def test_analysis_adjoint_is_flip_convolution():
    grid = PixelGrid(6, 5)
    rng = np.random.Generator(np.random.PCG64(31))
    phi = SpatioTemporalFilter.from_kernels(grid, [0.01, 0.02], rng.normal(size=(2, 6, 5)))
    f = Image(grid, rng.normal(size=(6, 5)))
    g = rng.normal(size=(2, 6, 5))
    coeffs = analyze(f, phi).coeffs
    for j in range(phi.m):
        left = float(np.sum(coeffs[j] * g[j]))
        right = float(np.sum(f.pixels * flip_convolve(phi.kernels[j], g[j])))
        scale = float(np.sum(np.abs(coeffs[j] * g[j])))
        assert left == pytest.approx(right, rel=1e-9, abs=1e-9 * scale)

    mask = CoefficientMask(rng.uniform(size=(2, 6, 5)) < 0.5, 50.0)
    _, gradient = objective_and_gradient(f, ActivationTensor(grid, phi.time_bins, g), mask, phi)
    residual = np.where(mask.selected, coeffs - g, 0.0)
    expected = 2.0 * sum(flip_convolve(kernel, r) for kernel, r in zip(phi.kernels, residual))
    atol = 1e-9 * np.max(np.abs(expected))
    np.testing.assert_allclose(gradient.pixels, expected, rtol=0, atol=atol)


def test_masked_objective_grows_with_the_mask(filter8, random8):
    acts = analyze(random8, filter8)
    f = Image.from_array(np.full((8, 8), 100.0))
    values = [
        objective_and_gradient(f, acts, roc_select(acts, p), filter8)[0] for p in PERCENTAGES
    ]
    assert all(a <= b for a, b in zip(values, values[1:]))
    full, _ = objective_and_gradient(f, acts, None, filter8)
    assert values[-1] == pytest.approx(full)


def test_roc_select_counts_and_ranks():
    coeffs = np.array([[[1.0, -5.0], [3.0, -3.0]], [[0.0, 2.0], [2.0, -1.0]]])
    acts = ActivationTensor(PixelGrid(2, 2), [0.1, 0.2], coeffs)
    mask = roc_select(acts, 50)
    assert mask.counts() == [2, 2]
    # ties (|3| and |-3|, |2| and |2|) go to the smaller row-major index
    assert mask.selected[0].tolist() == [[False, True], [True, False]]
    assert mask.selected[1].tolist() == [[False, True], [True, False]]
    assert roc_select(acts, 100).is_full
    assert roc_select(acts, 1).counts() == [1, 1]
    assert roc_select(acts, 37.5).counts() == [2, 2]
    assert roc_select(acts, 37.4).counts() == [1, 1]


@pytest.mark.parametrize("percentage", [0, -5, 100.5, float("nan")])
def test_roc_select_rejects_percentage(percentage):
    acts = ActivationTensor(PixelGrid(2, 2), [0.1], np.ones((1, 2, 2)))
    with pytest.raises(DomainError):
        roc_select(acts, percentage)


def test_roc_masks_are_nested(filter8, random8):
    acts = analyze(random8, filter8)
    masks = [roc_select(acts, p).selected for p in PERCENTAGES]
    for small, large in zip(masks, masks[1:]):
        assert np.all(large[small])


def test_roc_select_ignores_positive_scaling(filter8, random8):
    acts = analyze(random8, filter8)
    for factor in (0.125, 7.5):
        scaled = ActivationTensor(acts.grid, acts.time_bins, factor * acts.coeffs)
        for percentage in (5, 20, 50, 80, 100):
            np.testing.assert_array_equal(
                roc_select(scaled, percentage).selected, roc_select(acts, percentage).selected
            )


def test_mse():
    a = Image.from_array(np.zeros((2, 2)))
    b = Image.from_array(np.array([[1.0, -1.0], [2.0, 0.0]]))
    assert mse(a, b) == pytest.approx(1.5)
    with pytest.raises(DimensionError):
        mse(a, Image.from_array(np.zeros((2, 3))))


def test_gradient_descent_trace_is_monotone(filter8, random8):
    acts = analyze(random8, filter8)
    mask = roc_select(acts, 60)
    result = masked_least_squares(acts, mask, filter8, ReconstructionOptions(max_iters=300))
    trace = result.objective_trace
    assert len(trace) == result.iterations + 1
    assert all(b <= a + 1e-12 * trace[0] for a, b in zip(trace, trace[1:]))
    assert trace[-1] < trace[0]


def test_gradient_descent_reports_non_convergence(filter8, random8):
    acts = analyze(random8, filter8)
    with pytest.warns(ConvergenceWarning, match="3 iterations without converging"):
        result = masked_least_squares(acts, None, filter8, ReconstructionOptions(max_iters=3))
    assert result.iterations == 3
    assert not result.converged
    assert len(result.grad_norm_trace) == 4


def test_zero_fill_matches_dual_of_masked_coefficients(filter8, random8):
    acts = analyze(random8, filter8)
    mask = roc_select(acts, 40)
    opts = ReconstructionOptions(mode="fourier-dual", mask_semantics="zero-fill")
    direct = reconstruct(acts, mask, filter8, opts)
    filled = ActivationTensor(acts.grid, acts.time_bins, np.where(mask.selected, acts.coeffs, 0.0))
    np.testing.assert_allclose(direct.image.pixels, dual_solve(filled, filter8).pixels)
    assert direct.converged and direct.iterations == 0


def test_fourier_dual_rejects_partial_masked_objective(filter8, random8):
    acts = analyze(random8, filter8)
    with pytest.raises(DomainError):
        reconstruct(acts, roc_select(acts, 40), filter8, ReconstructionOptions(mode="fourier-dual"))


def test_dc_estimate_recovers_constant_image(filter8):
    image = Image.from_array(np.full((8, 8), 42.0))
    acts = analyze(image, filter8)
    opts = ReconstructionOptions(init="dc-estimate")
    result = masked_least_squares(acts, None, filter8, opts)
    assert result.iterations == 0
    assert result.converged
    np.testing.assert_allclose(result.image.pixels, 42.0)


def test_empty_mask_keeps_the_initializer(filter8, random8):
    acts = analyze(random8, filter8)
    mask = CoefficientMask(np.zeros(acts.coeffs.shape, dtype=bool), 0.0)
    for init in ("zeros", "dc-estimate"):
        result = masked_least_squares(acts, mask, filter8, ReconstructionOptions(init=init))
        assert result.iterations == 0
        assert result.converged
        assert result.objective_trace == [0.0]
        np.testing.assert_array_equal(result.image.pixels, 0.0)


def test_mask_shape_is_checked(filter8, random8):
    acts = analyze(random8, filter8)
    mask = CoefficientMask(np.ones((2, 8, 8), dtype=bool), 100.0)
    with pytest.raises(DimensionError):
        masked_least_squares(acts, mask, filter8, ReconstructionOptions())


@pytest.mark.slow
def test_gradient_descent_reaches_dual_solution(filter64, scene64):
    acts = analyze(scene64, filter64)
    opts = ReconstructionOptions(max_iters=1_000_000, grad_tol=1e-10)
    result = masked_least_squares(acts, None, filter64, opts)
    exact = dual_solve(acts, filter64)
    assert result.converged
    assert relative_error(result.image.pixels, exact.pixels) <= 1e-6
    trace = result.objective_trace
    assert all(b <= a + 1e-12 * trace[0] for a, b in zip(trace, trace[1:]))


def test_progressive_curve_zero_fill(corpus):
    opts = ReconstructionOptions(mode="fourier-dual", mask_semantics="zero-fill")
    config = Config()
    for name, path in corpus.items():
        image = read_pgm(path)
        phi = config.build_filter(image.grid)
        curve = progressive_reconstruct(image, phi, PERCENTAGES, opts)
        errors = [mse for _, mse in curve.pairs()]
        energy = float(np.mean(image.pixels**2))
        assert_non_increasing(errors, floor=1e-12 * energy)
        assert errors[-1] <= 1e-10 * energy, name


@pytest.mark.slow
def test_progressive_curve_masked_objective(corpus):
    config = Config()
    opts = ReconstructionOptions(max_iters=20000)
    for name, path in corpus.items():
        image = read_pgm(path)
        phi = config.build_filter(image.grid)
        curve = progressive_reconstruct(image, phi, PERCENTAGES, opts)
        errors = [point.mse for point in curve.points]
        energy = float(np.mean(image.pixels**2))
        assert not any(point.failed for point in curve.points)
        assert_non_increasing(errors, floor=1e-6 * energy)


def test_progressive_reconstruct_validates_percentages(filter8, random8):
    opts = ReconstructionOptions(mode="fourier-dual")
    with pytest.raises(DomainError):
        progressive_reconstruct(random8, filter8, [], opts)
    with pytest.raises(DomainError):
        progressive_reconstruct(random8, filter8, [40, 20], opts)
    with pytest.raises(DomainError):
        progressive_reconstruct(random8, filter8, [0, 50], opts)


def test_progressive_reconstruct_records_failures(filter8, random8):
    opts = ReconstructionOptions(mode="fourier-dual")
    curve = progressive_reconstruct(random8, filter8, [50, 100], opts, keep_images=True)
    first, last = curve.points
    assert first.failed and np.isnan(first.mse)
    assert not last.failed
    assert last.image is not None
    assert last.mse <= 1e-10 * float(np.mean(random8.pixels**2))


def test_temporal_progression_improves(scene64, filter64):
    rows = temporal_progression(scene64, filter64)
    assert [count for _, count, _ in rows] == [1, 2, 3, 4, 5]
    assert [t for t, _, _ in rows] == filter64.time_bins
    errors = [value for _, _, value in rows]
    assert_non_increasing(errors, slack=1e-9, floor=1e-9)
    assert errors[-1] <= 1e-10 * float(np.mean(scene64.pixels**2))
