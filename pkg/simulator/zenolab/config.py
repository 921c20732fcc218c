"""Configuration settings for the simulator."""
import logging
from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

_here = Path(__file__).resolve()


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables.

    None of these change a computed number: they bound enumerations, pick
    output locations and control verbosity and parallelism.
    """

    model_config = SettingsConfigDict(
        env_prefix="ZENOLAB_",
        # Support both simulator/.env and repo-root/.env
        env_file=[
            str(_here.parents[1] / ".env"),
            str(_here.parents[2] / ".env"),
        ],
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Enumeration caps
    branch_cap: int = 4096
    product_dim_cap: int = 65536
    oracle_dim_cap: int = 64

    # Output
    output_dir: str = "out"

    # Logging / progress
    log_level: str = "INFO"
    show_progress: bool = False

    # Sweep points evaluated concurrently (results are merged in n order)
    sweep_workers: int = 1


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def configure_logging(settings: Settings | None = None) -> None:
    """Install the bracket-tagged console format on the package logger."""
    settings = settings or get_settings()
    logger = logging.getLogger("zenolab")
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("[%(name)s] %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(settings.log_level.upper())
