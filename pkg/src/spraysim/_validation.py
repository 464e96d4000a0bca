"""Input validation helpers shared by the estimators and analysis functions."""

import numbers

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid configuration; ``field`` names the offending key path."""

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(prefix + message)


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"must be {bound}, got {value!r}", field=name)
    return value


def check_open_interval(value, lo, hi, name):
    if not isinstance(value, numbers.Real) or not (lo < value < hi):
        raise ConfigError(f"must lie in ({lo}, {hi}), got {value!r}", field=name)
    return value


def check_fraction(value, name):
    if not isinstance(value, numbers.Real) or not (0.0 <= value <= 1.0):
        raise ConfigError(f"must lie in [0, 1], got {value!r}", field=name)
    return value


def check_mask(mask, name="mask"):
    """Return ``mask`` as a 2-D boolean array; reject anything else."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.issubdtype(arr.dtype, np.integer) or not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must be binary (bool or 0/1 integers)")
        arr = arr.astype(bool)
    return arr


def check_rgb(image, name="image"):
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {arr.dtype}")
    return arr


def check_areas(areas, name="areas"):
    arr = np.asarray(areas, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got shape {arr.shape}")
    if np.any(~np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative")
    return arr
