from pydantic import BaseModel, Field, field_validator
import numpy as np

from app.exceptions import ConfigurationError
from app.models.base import ArrayModel, readonly

MAX_DEGREE = 5


class BasisSpec(BaseModel):
    """Equally spaced B-spline basis on [xmin, xmax] with its difference penalty order"""

    model_config = {"frozen": True}

    xmin: float
    xmax: float
    nseg: int
    degree: int = 3
    diff_order: int = 2

    @property
    def n_basis(self) -> int:
        return self.nseg + self.degree

    @property
    def spacing(self) -> float:
        return (self.xmax - self.xmin) / self.nseg

    def check(self) -> "BasisSpec":
        """Raise ConfigurationError naming the first violated invariant."""
        if not np.isfinite(self.xmin) or not np.isfinite(self.xmax):
            raise ConfigurationError("xmin and xmax must be finite")
        if not self.xmax > self.xmin:
            raise ConfigurationError(f"xmax > xmin violated: xmin={self.xmin}, xmax={self.xmax}")
        if self.nseg < 1:
            raise ConfigurationError(f"nseg >= 1 violated: nseg={self.nseg}")
        if self.degree < 0 or self.degree > MAX_DEGREE:
            raise ConfigurationError(f"0 <= degree <= {MAX_DEGREE} violated: degree={self.degree}")
        if self.diff_order < 1:
            raise ConfigurationError(f"diff_order >= 1 violated: diff_order={self.diff_order}")
        if self.n_basis < self.diff_order + 1:
            raise ConfigurationError(
                f"basis size nseg + degree >= diff_order + 1 violated: "
                f"{self.nseg} + {self.degree} < {self.diff_order + 1}"
            )
        return self


class DesignMatrix(ArrayModel):
    """B-spline evaluations, n rows by c columns"""

    values: np.ndarray
    spec: BasisSpec

    @field_validator("values", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class DifferenceMatrix(ArrayModel):
    """(c - q) x c matrix representation of the order-q difference operator"""

    values: np.ndarray
    order: int

    @field_validator("values", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)

    @property
    def n_coef(self) -> int:
        return self.values.shape[1]

    @property
    def n_diff(self) -> int:
        return self.values.shape[0]


class AdaptiveSmoothSpec(BaseModel):
    """
    Size of the B-spline basis modelling the smoothing-parameter field.

    `p` is a single count in 1D or the four factor sizes (p11, p12, p21, p22)
    in 2D: direction 1 uses p11 functions along its differences and p12 along
    the other axis, direction 2 uses p21 along the other axis and p22 along
    its differences.
    """

    model_config = {"frozen": True}

    p: int | tuple[int, int, int, int] = 1
    degree_smooth: int = Field(default=3, ge=0, le=MAX_DEGREE)

    @property
    def is_2d(self) -> bool:
        return isinstance(self.p, tuple)

    @property
    def non_adaptive(self) -> bool:
        sizes = self.p if isinstance(self.p, tuple) else (self.p,)
        return all(s == 1 for s in sizes)


class SmoothingBasis(ArrayModel):
    """Columns c_l of C; lambda = C phi."""

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)

    @property
    def p(self) -> int:
        return self.values.shape[1]


class PenaltyMatrix(ArrayModel):
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)

    def quadratic(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(theta @ self.values @ theta)
