import numpy as np

from app.exceptions import DataError


def as_vector(values, name: str, length: int | None = None) -> np.ndarray:
    """1-D float array with finite entries and (optionally) a fixed length."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DataError(f"{name} must be a vector, got shape {arr.shape}")
    if length is not None and arr.size != length:
        raise DataError(f"{name} has length {arr.size}, expected {length}")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(f"{name} has a non-finite value at index {bad[0]}")
    return arr


def sample_variance(y: np.ndarray) -> float:
    """var(y) with ddof=1, or 1.0 when y is constant so relative floors stay positive."""
    v = float(np.var(y, ddof=1)) if y.size > 1 else 0.0
    return v if v > 0 else 1.0
