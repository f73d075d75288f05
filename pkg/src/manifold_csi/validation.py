"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = ["as_real_matrix", "as_complex_matrix", "check_finite", "require"]


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


def check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")


def as_real_matrix(x, name: str = "X", *, n_rows: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float64 array, optionally enforcing the row count."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    require(arr.ndim == 2, f"{name} must be 2-dimensional, got shape {arr.shape}")
    if n_rows is not None:
        require(
            arr.shape[0] == n_rows,
            f"{name} must have {n_rows} rows, got {arr.shape[0]}",
        )
    check_finite(arr, name)
    return arr


def as_complex_matrix(x, name: str = "H") -> np.ndarray:
    arr = np.asarray(x, dtype=np.complex128)
    require(arr.ndim == 2, f"{name} must be 2-dimensional, got shape {arr.shape}")
    check_finite(arr.view(np.float64), name)
    return arr
