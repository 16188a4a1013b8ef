"""CSV emitters for plot data. Numbers use 12 significant digits."""

import csv
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import NonSpamIOError
from .reconstruction import ProgressiveCurve
from .temporal import TemporalProfile

TEMPORAL_COLUMNS = ["time_s", "T", "TS", "RC", "RS"]
CURVE_COLUMNS = ["percentage", "mse", "iterations", "converged"]
PROGRESSION_COLUMNS = ["time_s", "bins", "mse"]


def fmt(value: float) -> str:
    return f"{float(value):.12g}"


def write_rows(path: str, header: List[str], rows: Iterable[Sequence[str]]) -> None:
    try:
        with open(path, "w", newline="", encoding="ascii") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise NonSpamIOError(f"cannot write {path}: {e}") from e


def write_temporal_csv(path: str, profile: TemporalProfile) -> None:
    columns = zip(profile.times, profile.T, profile.TS, profile.RC, profile.RS)
    write_rows(path, TEMPORAL_COLUMNS, ([fmt(v) for v in row] for row in columns))


def write_spectrum_csv(path: str, freq_index: np.ndarray, magnitudes: np.ndarray) -> None:
    """One row per frequency index, one column per time bin."""
    header = ["freq_index"] + [f"bin_{j + 1}" for j in range(magnitudes.shape[0])]
    rows = (
        [str(int(k))] + [fmt(v) for v in magnitudes[:, i]]
        for i, k in enumerate(freq_index)
    )
    write_rows(path, header, rows)


def write_curve_csv(path: str, curve: ProgressiveCurve) -> None:
    rows = (
        [fmt(p.percentage), fmt(p.mse), str(p.iterations), "1" if p.converged else "0"]
        for p in curve.points
    )
    write_rows(path, CURVE_COLUMNS, rows)


def write_progression_csv(path: str, rows: List[Tuple[float, int, float]]) -> None:
    write_rows(
        path,
        PROGRESSION_COLUMNS,
        ([fmt(t), str(count), fmt(value)] for t, count, value in rows),
    )
