"""Small input-checking helpers used across the public API."""

import numbers

import numpy as np


def ensure_rng(seed=None):
    """Return a ``numpy.random.Generator``.

    Accepts ``None`` (fresh unseeded generator), an integer seed, a
    ``SeedSequence``, or an existing ``Generator`` (returned as is).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def as_symbol_sequence(y, n_symbols, length=None):
    """Validate an observation sequence and return it as an int array.

    Entries must be integers in ``[0, n_symbols)``; ``length``, when
    given, fixes the required number of observations.
    """
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("an observation sequence must be a non-empty 1-d array")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise ValueError("observation symbols must be integers")
        arr = rounded
    arr = arr.astype(np.int64, copy=False)
    if length is not None and arr.size != length:
        raise ValueError(f"expected a sequence of length {length}, got {arr.size}")
    if arr.min() < 0 or arr.max() >= n_symbols:
        raise ValueError(f"symbols must lie in [0, {n_symbols})")
    return arr


def as_state_path(q, n_states, length):
    """Validate a hidden-state path and return it as an int array."""
    arr = np.asarray(q)
    if arr.ndim != 1 or arr.size != length:
        raise ValueError(f"a state path must be a 1-d array of length {length}")
    arr = arr.astype(np.int64, copy=False)
    if arr.min() < 0 or arr.max() >= n_states:
        raise ValueError(f"states must lie in [0, {n_states})")
    return arr


def check_positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
