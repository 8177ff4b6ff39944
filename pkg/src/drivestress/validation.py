"""Small input validation helpers shared by the estimators and low-level ops."""

from __future__ import annotations

import numpy as np

from .errors import MissingClassError, ShapeError


def as_float_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def as_float_matrix(X, name: str = "X", n_cols: int | None = None) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ShapeError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    return arr


def check_lengths(a, b, name_a: str = "a", name_b: str = "b") -> None:
    if len(a) != len(b):
        raise ShapeError(f"{name_a} has length {len(a)} but {name_b} has length {len(b)}")


def check_binary_labels(y, name: str = "y") -> np.ndarray:
    """Validate labels are in {-1, +1} with both classes present."""
    arr = as_float_vector(y, name)
    values = set(np.unique(arr).tolist())
    if not values <= {-1.0, 1.0}:
        raise ShapeError(f"{name} must contain only -1/+1 labels, got {sorted(values)}")
    if len(values) < 2:
        raise MissingClassError(f"{name} contains a single class: {sorted(values)}")
    return arr


def check_square(K, name: str = "K") -> np.ndarray:
    arr = as_float_matrix(K, name)
    if arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr
