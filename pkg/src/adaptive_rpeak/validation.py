"""Input validation helpers used by the estimators and free functions."""

from __future__ import annotations

import numbers

import numpy as np

from .errors import ConfigurationError, DataError, InsufficientDataError


def check_signal(x, min_length=1, name="signal"):
    """Return `x` as a finite 1-D float64 array.

    Accepts anything array-like, or an object with a ``samples`` attribute
    (an :class:`~adaptive_rpeak.signal_io.EcgRecord`). A column vector of
    shape ``(n, 1)`` is flattened, mirroring how sklearn estimators are
    usually fed a single feature.
    """
    if hasattr(x, "samples"):
        x = x.samples
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"{name} has a non-finite value at index {bad[0]}", row=int(bad[0]))
    if arr.size < min_length:
        raise InsufficientDataError(
            f"{name} has {arr.size} samples, at least {min_length} required"
        )
    return arr


def check_fs(fs):
    if isinstance(fs, bool) or not isinstance(fs, numbers.Integral) or fs <= 0:
        raise ConfigurationError(f"sampling rate must be a positive integer, got {fs!r}")
    return int(fs)


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value <= 0:
        raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_peaks(indices, n_samples=None, name="peaks"):
    """Return peak indices as a strictly increasing int64 array."""
    if hasattr(indices, "indices"):
        indices = indices.indices
    arr = np.asarray(indices)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError(f"{name} must be integer sample indices")
    arr = arr.astype(np.int64)
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if arr[0] < 0 or (n_samples is not None and arr[-1] >= n_samples):
        raise ValueError(f"{name} fall outside the record bounds")
    return arr
