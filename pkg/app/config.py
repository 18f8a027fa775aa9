from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
        LOG_LEVEL: str = "INFO"
        OUTPUT_DIR: str = "out"
        DEFAULT_SEED: int = 20240101
        QUAD_TOL: float = 1e-9
        ROOT_TOL: float = 1e-9
        LP_TOL: float = 1e-9
        MONOTONE_GRID_N: int = 1001
        SOLVER_GRID_N: int = 256
        MC_BATCH_SIZE: int = 250_000
        MAX_WORKERS: int = 4
        SHOW_PROGRESS: bool = False
        FLOAT_DIGITS: int = 17  # JSON float formatting

        model_config = SettingsConfigDict(env_file="./.env", extra="ignore")


settings = Settings()
