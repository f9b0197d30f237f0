"""Small input-validation helpers shared by the estimators."""
import numbers

import numpy as np


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a nonnegative finite number, got {value!r}")
    return float(value)


def check_field(u, N, ncomp=None, name="field"):
    """Validate a real field of shape (ncomp, N, N, N) or (N, N, N)."""
    u = np.asarray(u, dtype=float)
    spatial = u.shape[-3:]
    if spatial != (N, N, N):
        raise ValueError(f"{name} has spatial shape {spatial}, expected {(N, N, N)}")
    if ncomp is not None:
        expect = (ncomp,) if ncomp != 1 else ()
        if u.shape[:-3] != expect and not (ncomp == 1 and u.shape[:-3] == (1,)):
            raise ValueError(f"{name} has {u.shape[:-3]} components, expected {expect}")
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} contains non-finite values")
    return u


def check_decreasing(values, name):
    values = [float(v) for v in values]
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{name} must be strictly decreasing, got {values}")
    return values
