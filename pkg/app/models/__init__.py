from .basis import (
    BasisSpec,
    DesignMatrix,
    DifferenceMatrix,
    AdaptiveSmoothSpec,
    SmoothingBasis,
    PenaltyMatrix,
)
from .mixed import PenaltyBlock, MixedParts, PrecisionModel
from .fit import Family, FitConfig, IterationRecord, FitResult, ModelOptions
from .reml import SearchStage, RemlEvaluation
from .dataset import Dataset
from .report import CheckResult, ComponentReport, RunReport
from .api import FitRequest, FitResponse, LambdaPoint, SimulationRequest, SimulationResponse

__all__ = [
    "BasisSpec",
    "DesignMatrix",
    "DifferenceMatrix",
    "AdaptiveSmoothSpec",
    "SmoothingBasis",
    "PenaltyMatrix",
    "PenaltyBlock",
    "MixedParts",
    "PrecisionModel",
    "Family",
    "FitConfig",
    "IterationRecord",
    "FitResult",
    "ModelOptions",
    "SearchStage",
    "RemlEvaluation",
    "Dataset",
    "CheckResult",
    "ComponentReport",
    "RunReport",
    "FitRequest",
    "FitResponse",
    "LambdaPoint",
    "SimulationRequest",
    "SimulationResponse",
]
