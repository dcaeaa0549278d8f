from enum import Enum
from typing import Optional
from pydantic import BaseModel, Field, field_validator
import numpy as np

from app.models.base import ArrayModel, readonly


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"


class FitConfig(BaseModel):
    model_config = {"frozen": True}

    max_iter: int = Field(default=200, ge=1)
    tol: float = Field(default=1e-6, gt=0)
    tau2_init: float = Field(default=1.0, gt=0)
    sigma2_init: Optional[float] = Field(default=None, gt=0)  # None -> sample variance of y
    family: Family = Family.GAUSSIAN
    variance_floor: float = Field(default=1e-10, gt=0)
    max_halvings: int = Field(default=10, ge=0)
    max_eta: float = Field(default=30.0, gt=0)


class IterationRecord(BaseModel):
    """Variance parameters used in one sweep and the quantities computed at them"""

    iteration: int
    tau2: list[float]
    sigma2: float
    ed: list[float]
    deviance: float
    # -2 log restricted likelihood without constants (Gaussian sweeps only)
    reml: Optional[float] = None


class FitResult(ArrayModel):
    beta: np.ndarray
    alpha: np.ndarray
    tau2: np.ndarray
    sigma2: float
    ed: np.ndarray
    fitted: np.ndarray
    linear_predictor: np.ndarray
    iterations: int
    trace: list[IterationRecord] = Field(default_factory=list)
    converged: bool
    collapsed: list[int] = Field(default_factory=list)
    family: Family = Family.GAUSSIAN
    deviance: float = 0.0

    @field_validator("beta", "alpha", "tau2", "ed", "fitted", "linear_predictor", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)

    @property
    def phi(self) -> np.ndarray:
        """Smoothing parameters phi_l = sigma2 / tau2_l."""
        return self.sigma2 / self.tau2

    @property
    def total_ed(self) -> float:
        return float(self.ed.sum())


class ModelOptions(BaseModel):
    """User-facing model configuration shared by the CLI and the HTTP API"""

    family: Family = Family.GAUSSIAN
    nseg: int = Field(default=20, ge=1)
    degree: int = Field(default=3, ge=0, le=5)
    diff: int = Field(default=2, ge=1)
    adaptive_p: int = Field(default=1, ge=1)
    adaptive_degree: int = Field(default=3, ge=0, le=5)
    nseg2d: Optional[tuple[int, int]] = None
    adaptive_p2d: Optional[tuple[int, int, int, int]] = None
    max_iter: Optional[int] = Field(default=None, ge=1)
    tol: Optional[float] = Field(default=None, gt=0)
    grid: tuple[int, int] = (50, 50)
