"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import NumericInputError


def check_feature_maps(X, c_in: int | None = None, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Coerce X to a float64 (n, C, H, W) array and check its shape."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"expected a 4-d (n_samples, channels, height, width) array, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise NumericInputError("feature maps contain NaN or Inf")
    n, c, h, w = X.shape
    if n == 0:
        raise ValueError("need at least one sample")
    for name, got, want in (("channels", c, c_in), ("height", h, height), ("width", w, width)):
        if want is not None and got != want:
            raise ValueError(f"{name}={got} does not match the fitted model ({want})")
    return X


def check_ages(y, max_age: int) -> np.ndarray:
    """Coerce ages to int64 and verify every value lies in [1, max_age]."""
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a non-empty 1-d age array, got shape {arr.shape}")
    as_float = arr.astype(np.float64)
    as_int = np.rint(as_float).astype(np.int64)
    if np.any(np.abs(as_float - as_int) > 0):
        raise ValueError("ages must be integer-valued")
    if np.any((as_int < 1) | (as_int > max_age)):
        raise ValueError(f"ages must lie in [1, {max_age}]")
    return as_int


def check_positive_sigmas(sigma_n, n: int) -> np.ndarray:
    """Coerce per-sample annotation spreads to a positive float array."""
    arr = np.asarray(sigma_n, dtype=np.float64).ravel()
    if arr.size != n:
        raise ValueError(f"expected {n} sigma values, got {arr.size}")
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("sigma_n values must be positive and finite")
    return arr
