"""
SABR Series Lab - Configuration
Handles environment variables and numerical defaults.
"""
from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables (prefix SABRLAB_)."""

    model_config = SettingsConfigDict(
        env_prefix="SABRLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Quadrature defaults
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    u_margin: float = 1.0
    max_subdiv: int = 200
    osc_threshold: float = 50.0  # sigma0*sinh(u) above which panels split at sine zeros

    # Series settings
    series_order: int = 24
    max_series_order: int = 40

    # Output
    csv_digits: int = 17
    workers: int = 1

    # Server Settings
    host: str = "0.0.0.0"
    port: int = 8000
    debug: bool = False
    cors_origins: list[str] = ["*"]


@lru_cache()
def get_settings() -> Settings:
    """Cached settings instance."""
    return Settings()
