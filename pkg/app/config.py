from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="SOPSPLINE_", extra="ignore")

    threads: int = 1
    max_iter: int = 200
    tol: float = 1e-6
    variance_floor: float = 1e-10
    oracle_max_n: int = 500
    csv_digits: int = 12
    log_level: str = "INFO"
    api_version: str = "v1"
    max_request_rows: int = 20000


@lru_cache
def get_settings() -> Settings:
    return Settings()
