"""Small argument checks shared by the estimators, studies and the CLI."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigurationError


def check_scalar(value, name, *, lo=None, hi=None, lo_open=True, hi_open=True, integer=False):
    """Return ``value`` as float (or int) after range checks."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigurationError(f"{name} must be {'an integer' if integer else 'a real number'}, "
                                 f"got {value!r}")
    if not np.isfinite(value):
        raise ConfigurationError(f"{name} must be finite")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigurationError(f"{name} = {value} must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise ConfigurationError(f"{name} = {value} must be {'<' if hi_open else '<='} {hi}")
    return int(value) if integer else float(value)


def as_grid_function(data, grid, *, name="f"):
    """Sample ``data`` on the closure nodes of ``grid``; zero on exterior nodes.

    ``data`` may be a scalar, a callable of the node coordinates, or an array of
    length ``grid.size`` (exterior entries are discarded).
    """
    if callable(data):
        vals = np.asarray(data(grid.nodes), dtype=float)
        if vals.shape == ():
            vals = np.full(grid.size, float(vals))
    elif np.isscalar(data):
        vals = np.full(grid.size, float(data))
    else:
        vals = np.asarray(data, dtype=float)
    if vals.shape != (grid.size,):
        raise ConfigurationError(f"{name} must have one value per grid node ({grid.size}), "
                                 f"got shape {vals.shape}")
    if not np.all(np.isfinite(vals[grid.closure_mask])):
        raise ConfigurationError(f"{name} must be finite on the closure")
    out = np.where(grid.closure_mask, vals, 0.0)
    return out


def check_sorted_increasing(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0 or np.any(np.diff(arr) <= 0):
        raise ConfigurationError(f"{name} must be a nonempty strictly increasing list")
    return arr
