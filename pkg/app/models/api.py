from typing import Optional
from pydantic import BaseModel, Field

from app.models.fit import ModelOptions
from app.models.report import RunReport


class FitRequest(ModelOptions):
    """POST /fits body: data columns plus model options"""

    x: list[float]
    y: list[float]
    x2: Optional[list[float]] = None
    weight: Optional[list[float]] = None


class LambdaPoint(BaseModel):
    direction: int
    index: int
    x: float
    x2: Optional[float] = None
    value: float


class FitResponse(BaseModel):
    report: RunReport
    fitted: list[float]
    linear_predictor: list[float]
    lambda_field: list[LambdaPoint]


class SimulationRequest(BaseModel):
    """POST /simulations body"""

    scenario: str
    n: Optional[int] = Field(default=None, ge=10)
    seed: int = 0
    sigma: Optional[float] = Field(default=None, gt=0)


class SimulationResponse(BaseModel):
    scenario: str
    columns: list[str]
    rows: list[list[float]]
