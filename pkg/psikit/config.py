"""Toolkit configuration using pydantic-settings.

Environment variables (prefix PSIKIT_, also read from a local .env file):

- PSIKIT_WORKERS (default: 1) -> thread pool size for simulate/beamform/filter
- PSIKIT_ROW_BLOCK (default: 8) -> beamforming rows per work unit
- PSIKIT_LOG_LEVEL (default: INFO)
- PSIKIT_LOG_JSON (default: 0) -> also emit JSON log lines
- PSIKIT_LOW_FRAC / PSIKIT_HIGH_FRAC (default: 0.10 / 0.10) -> SVD rejection
- PSIKIT_FIR_TAPS (default: 63) -> IQ low-pass length
- PSIKIT_THRESHOLD_DB (default: -6.0) -> skeleton binarization threshold
- PSIKIT_HISTOGRAM_BIN_PIXELS (default: 2.0)
- PSIKIT_OUTPUT_DIR (default: runs)

Worker count and log settings never change output bits, so they are kept out
of run manifests (see `Settings.numeric_snapshot`).
"""
from __future__ import annotations

from functools import lru_cache
from typing import Any, Dict

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Typed runtime settings."""

    workers: int = Field(default=1, ge=1, le=256)
    # Fixed work partition: reductions must not depend on `workers`
    row_block: int = Field(default=8, ge=1)

    log_level: str = Field(default="INFO")
    log_json: bool = Field(default=False)

    # ---- Clutter filter ----
    low_frac: float = Field(default=0.10, ge=0.0, lt=0.5)
    high_frac: float = Field(default=0.10, ge=0.0, lt=0.5)
    fir_taps: int = Field(default=63, ge=3)

    # ---- Metrics ----
    threshold_db: float = Field(default=-6.0, lt=0.0)
    histogram_bin_pixels: float = Field(default=2.0, gt=0.0)

    output_dir: str = Field(default="runs")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="PSIKIT_",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("fir_taps")
    @classmethod
    def _odd_taps(cls, v: int) -> int:
        # zero-phase 'same' filtering needs a center tap
        if v % 2 == 0:
            raise ValueError("fir_taps must be odd")
        return v

    @field_validator("log_level", mode="before")
    @classmethod
    def _norm_level(cls, v: object) -> str:
        s = str(v or "INFO").strip().upper()
        return s if s in {"DEBUG", "INFO", "WARNING", "ERROR"} else "INFO"

    def numeric_snapshot(self) -> Dict[str, Any]:
        """Settings that influence output values (recorded in manifests)."""
        return {
            "low_frac": self.low_frac,
            "high_frac": self.high_frac,
            "fir_taps": self.fir_taps,
            "threshold_db": self.threshold_db,
            "histogram_bin_pixels": self.histogram_bin_pixels,
        }


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return cached settings instance."""
    return Settings()
