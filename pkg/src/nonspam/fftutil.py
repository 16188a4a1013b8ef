"""2D DFT helpers with the thread cap taken from NONSPAM_THREADS.

Convention: unnormalized forward transform, the inverse carries 1/n.
scipy.fft splits work across independent 1D transforms, so the worker count
never changes the numbers.
"""

import os
from typing import Optional

import numpy as np
import scipy.fft

THREADS_ENV = "NONSPAM_THREADS"


def parse_thread_count(raw: Optional[str]) -> Optional[int]:
    """Returns the positive integer in raw, or None if it is unset/invalid."""
    if raw is None or not raw.strip():
        return None
    try:
        count = int(raw)
    except ValueError:
        return None
    return count if count >= 1 else None


def worker_count() -> int:
    return parse_thread_count(os.getenv(THREADS_ENV)) or 1


def fft2(x: np.ndarray) -> np.ndarray:
    return scipy.fft.fft2(x, workers=worker_count())


def ifft2(x: np.ndarray) -> np.ndarray:
    return scipy.fft.ifft2(x, workers=worker_count())
