"""
Application configuration using Pydantic Settings.
"""
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from QKD_SIFT_* environment variables."""

    threads: Optional[int] = None
    log_level: str = "INFO"
    delta_confidence: float = 1 - 1e-6
    reconcile_block_size: Optional[int] = None
    archive_path: Optional[Path] = None

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="QKD_SIFT_",
        case_sensitive=False,
        extra="ignore"
    )


# Global settings instance
settings = Settings()
