"""Small argument checks shared across the package.

Every helper raises ``ValueError`` (or ``TypeError``) with a message naming
the offending argument, and returns the validated value so calls can be
chained inline.
"""

from __future__ import annotations

import numbers

import numpy as np


def check_positive(value, name, strict=True):
    """Return ``value`` as float, requiring it to be (strictly) positive."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_int(value, name, minimum=None, maximum=None):
    """Return ``value`` as int, enforcing optional inclusive bounds."""
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name} must be <= {maximum}, got {value}")
    return value


def check_dimension(n):
    """Phase-space dimension n must be 1, 2 or 3."""
    return check_int(n, "dimension", 1, 3)


def check_mu(mu):
    """The force sign must be +1 or -1."""
    if mu not in (1, -1, 1.0, -1.0):
        raise ValueError(f"mu must be +1 or -1, got {mu}")
    return int(mu)


def check_finite_array(values, name, shape=None):
    """Return ``values`` as a float64 array, rejecting NaN/inf and bad shapes."""
    arr = np.asarray(values, dtype=float)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_series(times, values, name="series"):
    """Validate a time series: equal-length 1-D finite arrays, times increasing."""
    t = check_finite_array(times, f"{name} times")
    y = check_finite_array(values, f"{name} values")
    if t.ndim != 1 or y.ndim != 1 or t.shape != y.shape:
        raise ValueError(f"{name}: times and values must be 1-D arrays of equal length")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError(f"{name}: times must be strictly increasing")
    return t, y


def check_window(window):
    """A fit window is a pair (a, b) with a < b."""
    try:
        a, b = (float(w) for w in window)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"window must be a pair of numbers, got {window!r}") from exc
    if not a < b:
        raise ValueError(f"window must satisfy a < b, got ({a}, {b})")
    return a, b


def check_delta(delta):
    """The integrability gain delta lives in the open interval (0, 1)."""
    delta = check_positive(delta, "delta")
    if delta >= 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return delta
