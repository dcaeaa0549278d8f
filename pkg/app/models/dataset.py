from typing import Optional
from pydantic import field_validator
import numpy as np

from app.exceptions import DataError
from app.models.base import ArrayModel, readonly

MIN_OBSERVATIONS = 10


class Dataset(ArrayModel):
    """Regression data y_i = f(x_i) + e_i, optionally two-dimensional and weighted"""

    x1: np.ndarray
    y: np.ndarray
    x2: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None

    @field_validator("x1", "y", "x2", "weight", mode="before")
    @classmethod
    def _freeze(cls, v):
        return None if v is None else readonly(v)

    @classmethod
    def build(cls, x1, y, x2=None, weight=None) -> "Dataset":
        """Construct and check equal lengths, finiteness, non-negative weights and n >= 10."""
        columns = {"x1": x1, "y": y, "x2": x2, "weight": weight}
        arrays = {}
        for name, values in columns.items():
            if values is None:
                continue
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise DataError(f"{name} must be one-dimensional")
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise DataError(f"{name} has a non-finite value at index {bad[0]}")
            arrays[name] = arr

        lengths = {name: arr.size for name, arr in arrays.items()}
        if len(set(lengths.values())) != 1:
            raise DataError(f"columns differ in length: {lengths}")
        if arrays["y"].size < MIN_OBSERVATIONS:
            raise DataError(f"need at least {MIN_OBSERVATIONS} observations, got {arrays['y'].size}")
        if "weight" in arrays and np.any(arrays["weight"] < 0):
            raise DataError("weights must be non-negative")
        return cls(**arrays)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def is_2d(self) -> bool:
        return self.x2 is not None
