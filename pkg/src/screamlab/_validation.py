"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import EmptyTrace, ShapeError


def check_samples(x, *, dtype=np.float64, name="samples"):
    """Return ``x`` as a finite, non-empty 1-D array."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyTrace(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_traces(X, *, min_rows=1, name="traces"):
    """Return ``X`` as a finite 2-D float array with at least ``min_rows`` rows."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (n_traces, n_samples), got {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ShapeError(f"{name} needs at least {min_rows} rows, got {arr.shape[0]}")
    if arr.shape[1] == 0:
        raise EmptyTrace(f"{name} has zero samples per row")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_plaintexts(P, n_rows=None):
    """Return ``P`` as a ``(n, 16)`` uint8 array."""
    arr = np.asarray(P)
    if arr.ndim == 1 and arr.size == 16:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 16:
        raise ShapeError(f"plaintexts must have shape (n, 16), got {arr.shape}")
    if np.any(arr < 0) or np.any(arr > 255):
        raise ValueError("plaintext bytes must lie in [0, 255]")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ShapeError(f"expected {n_rows} plaintexts, got {arr.shape[0]}")
    return arr.astype(np.uint8)


def check_key(key):
    """Return a 16-byte key as a uint8 array; accepts bytes, hex str or sequence."""
    if isinstance(key, str):
        key = bytes.fromhex(key)
    arr = np.frombuffer(bytes(key), dtype=np.uint8) if isinstance(key, (bytes, bytearray)) \
        else np.asarray(key)
    if arr.shape != (16,):
        raise ShapeError(f"key must be 16 bytes, got shape {arr.shape}")
    if np.any(arr < 0) or np.any(arr > 255):
        raise ValueError("key bytes must lie in [0, 255]")
    return arr.astype(np.uint8)


def check_positive(value, name):
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return value
