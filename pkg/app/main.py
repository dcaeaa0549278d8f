import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from app.config import get_settings
from app.routers import fits, simulations

settings = get_settings()

logging.basicConfig(level=settings.log_level.upper())
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(f"Starting SOP spline API {settings.api_version} (threads={settings.threads})")
    yield
    logger.info("Shutting down SOP spline API...")


app = FastAPI(
    title="SOP Spline API",
    description="Adaptive P-spline smoothing with variance components fitted by SOP",
    version=settings.api_version,
    lifespan=lifespan,
)

app.include_router(fits.router, prefix=f"/api/{settings.api_version}/fits", tags=["fits"])
app.include_router(simulations.router, prefix=f"/api/{settings.api_version}/simulations", tags=["simulations"])


@app.get("/health")
async def health():
    return {"status": "ok", "version": settings.api_version}
