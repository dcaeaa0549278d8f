from fastapi import APIRouter, HTTPException

from app.exceptions import SopSplineError
from app.models import SimulationRequest, SimulationResponse
from app.services.simulation import SCENARIOS, simulate

router = APIRouter()


@router.get("/scenarios")
def list_scenarios() -> list[str]:
    return sorted(SCENARIOS)


@router.post("", response_model=SimulationResponse)
def create_simulation(body: SimulationRequest):
    if body.scenario not in SCENARIOS:
        raise HTTPException(
            status_code=404, detail=f"unknown scenario '{body.scenario}'; valid scenarios: {', '.join(sorted(SCENARIOS))}"
        )
    try:
        frame = simulate(body.scenario, n=body.n, seed=body.seed, sigma=body.sigma)
    except SopSplineError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return SimulationResponse(scenario=body.scenario, columns=list(frame.columns), rows=frame.to_numpy().tolist())
