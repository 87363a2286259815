"""Small argument-checking helpers used at public API boundaries."""

import numpy as np

from .errors import ConfigError, PanelError


def check_positive(name: str, value) -> float:
    value = float(value)
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def check_positive_int(name: str, value) -> int:
    if int(value) != value or int(value) < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_nonnegative_int(name: str, value) -> int:
    if int(value) != value or int(value) < 0:
        raise ConfigError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


def check_fraction(name: str, value) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie strictly between 0 and 1, got {value}")
    return value


def check_index(name: str, value, bound: int) -> int:
    value = int(value)
    if not 0 <= value < bound:
        raise ConfigError(f"{name} must lie in [0, {bound}), got {value}")
    return value


def readonly_matrix(name: str, values, allow_nonfinite: bool = False) -> np.ndarray:
    """Coerce to a read-only 2-D float64 array, rejecting NaN/inf by default."""
    arr = np.array(values, dtype=float, order="C")
    if arr.ndim != 2:
        raise PanelError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        i, t = np.argwhere(~np.isfinite(arr))[0]
        raise PanelError(f"{name} contains a non-finite entry at row {i}, column {t}")
    arr.setflags(write=False)
    return arr


def readonly_vector(name: str, values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise PanelError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise PanelError(f"{name} contains a non-finite entry")
    arr.setflags(write=False)
    return arr
