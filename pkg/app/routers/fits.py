import logging

from fastapi import APIRouter, HTTPException

from app.dependencies import SettingsDep
from app.exceptions import SopSplineError
from app.models import Dataset, FitRequest, FitResponse, LambdaPoint, ModelOptions
from app.services.fitting import build_report, fit_dataset, lambda_frame

logger = logging.getLogger(__name__)

router = APIRouter()


@router.post("", response_model=FitResponse)
def create_fit(body: FitRequest, settings: SettingsDep):
    """
    Fit the posted data and return the run report, fitted values and the
    estimated smoothing field. Non-convergence is reported, not an error.
    """
    if len(body.y) > settings.max_request_rows:
        raise HTTPException(
            status_code=413, detail=f"at most {settings.max_request_rows} rows per request, got {len(body.y)}"
        )
    try:
        dataset = Dataset.build(body.x, body.y, x2=body.x2, weight=body.weight)
        options = ModelOptions(**body.model_dump(include=set(ModelOptions.model_fields)))
        model = fit_dataset(dataset, options, settings)
    except SopSplineError as e:
        logger.info(f"Rejected fit request: {e}")
        raise HTTPException(status_code=422, detail=str(e))

    field = lambda_frame(model)
    points = [
        LambdaPoint(
            direction=int(row["direction"]),
            index=int(row["index"]),
            x=float(row["x"]),
            x2=float(row["x2"]) if "x2" in field.columns else None,
            value=float(row["lambda"]),
        )
        for row in field.to_dict(orient="records")
    ]
    return FitResponse(
        report=build_report(model),
        fitted=model.result.fitted.tolist(),
        linear_predictor=model.result.linear_predictor.tolist(),
        lambda_field=points,
    )
