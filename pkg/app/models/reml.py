from pydantic import BaseModel, Field, field_validator
import numpy as np

from app.models.base import ArrayModel, readonly


class SearchStage(BaseModel):
    stage: str
    evaluations: int
    best: float


class RemlEvaluation(ArrayModel):
    minus2_reml: float
    tau2: np.ndarray
    sigma2: float
    evaluations: int = 0
    schedule: list[SearchStage] = Field(default_factory=list)

    @field_validator("tau2", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)
