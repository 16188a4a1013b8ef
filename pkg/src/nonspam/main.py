"""Command-line front end: nonspam <kernels|decompose|reconstruct|curve|bounds>.

Run with `uv run -m nonspam.main ...` or the `nonspam` script.
Exit codes: 0 success, 1 usage/validation, 2 I/O or format, 3 numerical.
"""

import argparse
import os
import sys
import warnings
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

from . import export, nspm, pgm
from .config import Config, load_config, with_seed
from .errors import (
    ConvergenceWarning,
    FrameViolationError,
    NonSpamError,
    NonSpamIOError,
    UsageError,
)
from .fftutil import THREADS_ENV, parse_thread_count
from .frame import analyze, dense_frame_matrix, frame_bounds, frame_check
from .reconstruction import (
    mse,
    progressive_reconstruct,
    reconstruct,
    roc_select,
    temporal_progression,
)
from .spatial import PixelGrid, classify_passband, spectrum_cut
from .temporal import temporal_profile

DEFAULT_OUT_DIR = "data"
DEFAULT_GRID_SIZE = 64
DEFAULT_PERCENTAGES = "20,40,60,80,100"
TEMPORAL_CSV = "temporal_kernels.csv"
SPECTRUM_CSV = "spectrum_cut.csv"
RENDER_BOUNDS = "bounds.txt"
ORACLE_TOL = 1e-8


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad input; usage errors here exit 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def info(message: str) -> None:
    print(f"INFO: {message}", file=sys.stderr)


def warn(message: str) -> None:
    print(f"WARN: {message}", file=sys.stderr)


def parse_percentages(raw: str) -> List[float]:
    try:
        values = [float(item) for item in raw.split(",")]
    except ValueError as e:
        raise UsageError(f"malformed percentage list {raw!r}") from e
    if not values:
        raise UsageError(f"malformed percentage list {raw!r}")
    return values


def ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise NonSpamIOError(f"cannot create directory {path}: {e}") from e


def ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        ensure_dir(parent)


def write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise NonSpamIOError(f"cannot write {path}: {e}") from e


def cmd_kernels(config: Config, out_dir: str, size: int = DEFAULT_GRID_SIZE) -> List[str]:
    """Temporal kernel CSV (T, TS, R_C, R_S) and per-bin spectrum cut CSV."""
    ensure_dir(out_dir)
    grid = config.time_grid()
    info(f"Sampling temporal kernels on {grid.samples} points (dt={grid.dt})...")
    profile = temporal_profile(config.params, grid)
    temporal_path = os.path.join(out_dir, TEMPORAL_CSV)
    export.write_temporal_csv(temporal_path, profile)

    phi = config.build_filter(PixelGrid(size, size))
    labels = classify_passband(phi)
    for t, label in zip(phi.time_bins, labels):
        info(f"  bin t={export.fmt(t)} s: {label}")
    freq_index, magnitudes = spectrum_cut(phi)
    spectrum_path = os.path.join(out_dir, SPECTRUM_CSV)
    export.write_spectrum_csv(spectrum_path, freq_index, magnitudes)
    info(f"Wrote {temporal_path} and {spectrum_path}")
    return [temporal_path, spectrum_path]


def cmd_decompose(
    image_path: str, config: Config, coeff_path: str, renders_dir: Optional[str] = None
) -> List[str]:
    """Analyzes a PGM into an NSPM coefficient file (and optional per-bin renders)."""
    image = pgm.read_pgm(image_path)
    info(f"Loaded {image_path} ({image.grid.rows}x{image.grid.cols}, maxval {image.maxval})")
    phi = config.build_filter(image.grid)
    acts = analyze(image, phi)
    ensure_parent(coeff_path)
    nspm.write_coefficients(coeff_path, acts)
    written = [coeff_path]
    info(f"Wrote {acts.m} bins of coefficients to {coeff_path}")

    if renders_dir is not None:
        ensure_dir(renders_dir)
        labels = classify_passband(phi)
        rows = []
        for j, coeffs in enumerate(acts.coeffs):
            stretched, low, high = pgm.normalized(coeffs)
            path = os.path.join(renders_dir, f"bin_{j + 1}.pgm")
            pgm.write_pgm(path, stretched, 255)
            written.append(path)
            rows.append(
                [str(j + 1), export.fmt(acts.time_bins[j]), export.fmt(low),
                 export.fmt(high), labels[j]]
            )
        bounds_path = os.path.join(renders_dir, RENDER_BOUNDS)
        export.write_rows(bounds_path, ["bin", "time_s", "min", "max", "passband"], rows)
        written.append(bounds_path)
        info(f"Wrote {acts.m} renders to {renders_dir}")
    return written


def cmd_reconstruct(
    coeff_path: str,
    config: Config,
    percentage: float,
    out_image: str,
    original_path: Optional[str] = None,
) -> str:
    """Reconstructs a PGM from the top `percentage` coefficients; returns the report."""
    acts = nspm.read_coefficients(coeff_path)
    mask = roc_select(acts, percentage)
    original = pgm.read_pgm(original_path) if original_path else None
    if original is not None and original.grid != acts.grid:
        raise UsageError(
            f"original is {original.grid.rows}x{original.grid.cols}, "
            f"coefficients are {acts.grid.rows}x{acts.grid.cols}"
        )

    phi = config.build_filter(acts.grid, time_bins=acts.time_bins)
    opts = config.reconstruction
    info(f"Reconstructing from {percentage}% of coefficients ({opts.mode})...")
    result = reconstruct(acts, mask, phi, opts)
    maxval = original.maxval if original is not None and original.maxval else 255
    ensure_parent(out_image)
    pgm.write_pgm(out_image, result.image.pixels, maxval)

    lines = [f"percentage = {export.fmt(percentage)}"]
    if original is not None:
        error = mse(original, result.image)
        energy = float(np.mean(original.pixels**2))
        relative = error / energy if energy > 0 else float("nan")
        lines.append(f"mse = {export.fmt(error)}")
        lines.append(f"relative_mse = {export.fmt(relative)}")
    else:
        lines.append("mse = n/a")
    lines.append(f"iterations = {result.iterations}")
    lines.append(f"converged = {1 if result.converged else 0}")
    report = "\n".join(lines) + "\n"
    write_text(out_image + ".report.txt", report)
    return report


def cmd_curve(
    image_path: str,
    config: Config,
    percentages: List[float],
    out_csv: str,
    over_time: bool = False,
) -> str:
    """Progressive-quality curve (MSE per percentage, or per decoding time)."""
    image = pgm.read_pgm(image_path)
    phi = config.build_filter(image.grid)
    ensure_parent(out_csv)
    if over_time:
        rows = temporal_progression(image, phi)
        export.write_progression_csv(out_csv, rows)
        info(f"Wrote {len(rows)} time points to {out_csv}")
        return out_csv

    with warnings.catch_warnings():
        # reported per point below
        warnings.simplefilter("ignore", ConvergenceWarning)
        curve = progressive_reconstruct(image, phi, percentages, config.reconstruction)
    for point in curve.points:
        if point.failed:
            warn(f"{export.fmt(point.percentage)}%: {point.error}")
        elif not point.converged:
            warn(f"{export.fmt(point.percentage)}%: not converged after {point.iterations} iterations")
    export.write_curve_csv(out_csv, curve)
    info(f"Wrote {len(curve.points)} curve points to {out_csv}")
    return out_csv


def cmd_bounds(config: Config, grid_size: int, oracle: bool = False) -> str:
    """Frame bounds, bound chain and seeded frame check; returns the report."""
    grid = PixelGrid(grid_size, grid_size)
    phi = config.build_filter(grid)
    bounds = frame_bounds(phi)
    lines = [
        f"alpha_paper = {export.fmt(bounds.alpha_paper)}",
        f"beta_paper = {export.fmt(bounds.beta_paper)}",
        f"alpha_tight = {export.fmt(bounds.alpha_tight)}",
        f"beta_tight = {export.fmt(bounds.beta_tight)}",
    ]
    if not bounds.chain_holds():
        raise FrameViolationError(
            "alpha_paper <= alpha_tight <= beta_tight <= beta_paper does not hold", trial=-1
        )
    lines.append("chain alpha_paper <= alpha_tight <= beta_tight <= beta_paper: ok")

    report = frame_check(phi, config.frame_trials, config.seed)
    lines.append(
        f"frame_check trials = {report.trials} seed = {report.seed} "
        f"min_ratio = {export.fmt(report.min_ratio)} max_ratio = {export.fmt(report.max_ratio)}"
    )

    if oracle:
        singular = np.linalg.svd(dense_frame_matrix(phi), compute_uv=False)
        sv_min, sv_max = float(singular[-1] ** 2), float(singular[0] ** 2)
        for name, dense, sharp in (
            ("alpha", sv_min, bounds.alpha_tight),
            ("beta", sv_max, bounds.beta_tight),
        ):
            if abs(dense - sharp) > ORACLE_TOL * abs(sharp):
                raise FrameViolationError(
                    f"SVD oracle {name} = {dense:.12g} differs from {sharp:.12g}", trial=-1
                )
        lines.append(
            f"oracle sigma_min^2 = {export.fmt(sv_min)} sigma_max^2 = {export.fmt(sv_max)}: ok"
        )
    return "\n".join(lines) + "\n"


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="nonspam", description="non-SPAM retinal filter bank codec")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def common(sub):
        sub.add_argument("--config", help="flat key = value configuration file")
        sub.add_argument("--seed", type=int, help="overrides the configured seed")
        return sub

    kernels = common(commands.add_parser("kernels", help="temporal kernels and spectrum cuts"))
    kernels.add_argument("--out", default=os.path.join(DEFAULT_OUT_DIR, "kernels"))
    kernels.add_argument("--size", type=int, default=DEFAULT_GRID_SIZE)

    decompose = common(commands.add_parser("decompose", help="image -> NSPM coefficients"))
    decompose.add_argument("image")
    decompose.add_argument("--out", default=os.path.join(DEFAULT_OUT_DIR, "coefficients.nspm"))
    decompose.add_argument("--renders", help="directory for per-bin PGM renders")

    rebuild = common(commands.add_parser("reconstruct", help="NSPM coefficients -> image"))
    rebuild.add_argument("coefficients")
    rebuild.add_argument("--percent", default="100")
    rebuild.add_argument("--out", default=os.path.join(DEFAULT_OUT_DIR, "reconstruction.pgm"))
    rebuild.add_argument("--original", help="original PGM, enables the MSE report")

    curve = common(commands.add_parser("curve", help="progressive reconstruction curve"))
    curve.add_argument("image")
    curve.add_argument("--percent", default=DEFAULT_PERCENTAGES)
    curve.add_argument("--out", default=os.path.join(DEFAULT_OUT_DIR, "curve.csv"))
    curve.add_argument("--over-time", action="store_true", help="MSE per decoding time instead")

    bounds = common(commands.add_parser("bounds", help="frame bounds and frame check"))
    bounds.add_argument("--size", type=int, default=DEFAULT_GRID_SIZE)
    bounds.add_argument("--oracle", action="store_true", help="dense SVD cross-check")
    return parser


def run(args) -> None:
    if args.seed is not None and args.seed < 0:
        raise UsageError(f"--seed must be >= 0, got {args.seed}")
    config = with_seed(load_config(args.config), args.seed)
    if getattr(args, "size", 1) < 1:
        raise UsageError(f"--size must be >= 1, got {args.size}")

    if args.command == "kernels":
        cmd_kernels(config, args.out, args.size)
    elif args.command == "decompose":
        cmd_decompose(args.image, config, args.out, args.renders)
    elif args.command == "reconstruct":
        percentages = parse_percentages(args.percent)
        if len(percentages) != 1:
            raise UsageError("reconstruct takes a single --percent value")
        print(cmd_reconstruct(args.coefficients, config, percentages[0], args.out, args.original), end="")
    elif args.command == "curve":
        cmd_curve(args.image, config, parse_percentages(args.percent), args.out, args.over_time)
    elif args.command == "bounds":
        print(cmd_bounds(config, args.size, args.oracle), end="")


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    raw_threads = os.getenv(THREADS_ENV)
    if raw_threads and parse_thread_count(raw_threads) is None:
        warn(f"ignoring {THREADS_ENV}={raw_threads!r}, using 1 thread")

    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            try:
                run(args)
            finally:
                for w in caught:
                    warn(str(w.message))
    except NonSpamError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
