"""Input validation helpers used by the estimators and the metric suite."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DimensionMismatchError, InvalidParameterError


def as_vector(x, dim=None, name="x"):
    """Coerce ``x`` to a finite 1-D float64 array, optionally checking dim."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite components")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(
            f"{name} has dimension {v.shape[0]}, expected {dim}"
        )
    return v


def as_matrix(X, name="X"):
    """Coerce ``X`` to a finite 2-D float64 array with at least one row."""
    m = np.asarray(X, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite values")
    return m


def check_finite_scalar(value, name):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


def check_positive(value, name):
    value = check_finite_scalar(value, name)
    if value <= 0:
        raise InvalidParameterError(f"{name} must be > 0, got {value!r}")
    return value


def check_nonnegative(value, name):
    value = check_finite_scalar(value, name)
    if value < 0:
        raise InvalidParameterError(f"{name} must be >= 0, got {value!r}")
    return value


def check_unit_interval(value, name, *, open_low=True, open_high=False):
    """Check that ``value`` lies in (0, 1] / [0, 1) / variants thereof."""
    value = check_finite_scalar(value, name)
    low_bad = value <= 0 if open_low else value < 0
    high_bad = value >= 1 if open_high else value > 1
    if low_bad or high_bad:
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise InvalidParameterError(
            f"{name} must lie in {lo}0, 1{hi}, got {value!r}"
        )
    return value


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 1:
        raise InvalidParameterError(f"{name} must be >= 1, got {value!r}")
    return value
