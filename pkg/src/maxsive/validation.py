"""Input validation helpers used by the public API surfaces."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, ShapeError


def as_grid(a, name: str = "grid", require_finite: bool = True) -> np.ndarray:
    """Coerce to a 2-D float64 array, optionally checking finiteness."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if require_finite and not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def as_complex_grid(a, name: str = "spectrum") -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    if not np.isfinite(arr.real).all() or not np.isfinite(arr.imag).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def as_latent(a, name: str = "latent") -> np.ndarray:
    """Coerce to a (channels, height, width) float64 tensor with square planes."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be (c, h, w), got shape {arr.shape}")
    c, h, w = arr.shape
    if h != w:
        raise ShapeError(f"{name} planes must be square, got {h}x{w}")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def as_vector(a, min_len: int = 1, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64).ravel()
    if arr.size < min_len:
        raise ShapeError(f"{name} needs at least {min_len} entries, got {arr.size}")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_even(h: int, w: int, name: str = "grid") -> None:
    if h % 2 or w % 2:
        raise ShapeError(f"{name} requires even dimensions, got {h}x{w}")
