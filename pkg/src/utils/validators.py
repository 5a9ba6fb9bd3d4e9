"""
Numeric validators shared by all modules.
Each helper either returns a normalised value or raises a typed shapetrack error.
"""

from typing import Type

import numpy as np

from src.core.errors import InputError


def as_points(points, name: str = "points", error: Type[InputError] = InputError) -> np.ndarray:
    """Return `points` as a float64 (N, 3) array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise error(f"{name} must have shape (N, 3), got {arr.shape}")
    return arr


def require_finite(values, name: str, error: Type[InputError] = InputError) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise error(f"{name} contains non-finite entries")
    return arr


def require_positive(value: float, name: str, error: Type[InputError] = InputError) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise error(f"{name} must be a number, got {value!r}")
    if not np.isfinite(value) or value <= 0.0:
        raise error(f"{name} must be positive, got {value}")
    return value


def require_length(vector, length: int, name: str, error: Type[InputError] = InputError) -> np.ndarray:
    arr = np.asarray(vector, dtype=np.float64).reshape(-1)
    if arr.size != length:
        raise error(f"{name} must have length {length}, got {arr.size}")
    return arr
