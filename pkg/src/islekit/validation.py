"""Input validation helpers and package exceptions."""

import numpy as np


class InvalidShapeError(ValueError):
    """Raised when an array does not match the shape a kernel or model expects."""


class ConfigError(ValueError):
    """Raised for invalid configuration values (CLI exit code 2)."""


class MissingInputError(FileNotFoundError):
    """Raised when a required file or directory is absent (CLI exit code 3)."""


class NumericError(ArithmeticError):
    """Raised when a computation produces non-finite values (CLI exit code 4)."""


def as_float64(x, name="array"):
    """Coerce to a C-contiguous float64 ndarray, rejecting non-finite values."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or Inf")
    return arr


def check_windows(X, n_channels=6, name="X"):
    """Validate feature windows and return them as a (n, T, C) float64 array.

    Accepts a single (T, C) window or a stacked (n, T, C) batch.
    """
    arr = as_float64(X, name)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise InvalidShapeError(
            f"{name} must be (T, {n_channels}) or (n, T, {n_channels}), got shape {np.shape(X)}"
        )
    if arr.shape[-1] != n_channels:
        raise InvalidShapeError(
            f"{name} must have {n_channels} channels, got {arr.shape[-1]}"
        )
    return arr


def check_labels(y, n, name="y"):
    """Validate binary labels against the number of samples."""
    arr = np.asarray(y)
    if arr.shape != (n,):
        raise InvalidShapeError(f"{name} must have shape ({n},), got {arr.shape}")
    arr = arr.astype(np.int64)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0/1 labels")
    return arr
