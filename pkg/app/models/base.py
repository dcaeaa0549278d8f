import numpy as np
from pydantic import BaseModel, ConfigDict


def readonly(values) -> np.ndarray:
    """Float copy of `values` that cannot be modified in place."""
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


class ArrayModel(BaseModel):
    """Immutable model carrying numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
