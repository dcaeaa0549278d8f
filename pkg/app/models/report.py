from typing import Optional
from pydantic import BaseModel, Field


class ComponentReport(BaseModel):
    label: str
    tau2: float
    phi: float
    ed: float
    collapsed: bool = False


class RunReport(BaseModel):
    """report.json written by `fit`"""

    config: dict
    family: str
    dimension: int
    n_obs: int
    n_variance_components: int
    components: list[ComponentReport]
    sigma2: float
    fixed_dim: int
    total_ed: float
    model_dim: float
    rss: float
    deviance: float
    iterations: int
    converged: bool
    wall_seconds: float
    non_adaptive_reduction: bool = False
    lambda_range: Optional[tuple[float, float]] = None
    notes: list[str] = Field(default_factory=list)


class CheckResult(BaseModel):
    """One row of the `validate` pass/fail table"""

    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
