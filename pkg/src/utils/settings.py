import os
from pathlib import Path
from typing import Tuple

from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, Field, field_validator


class PhaseThresholds(BaseModel):
    """Cut-offs used to label the thermodynamic phase.

    The limiting regimes are only asymptotic, so these numbers are conventions.
    Raw λ and λν are always reported next to the label.
    """
    extended_min_lambda: float = 0.6
    localized_max_lambda: float = 0.1
    few_intervals_max_lambda_nu: float = 1.0


class OrderWindows(BaseModel):
    """Bounded-ratio windows standing in for asymptotic "of the order of" statements."""
    order: Tuple[float, float] = (1 / 25, 25.0)
    energy_to_mu: Tuple[float, float] = (0.25, 4.0)
    mu_to_gamma: Tuple[float, float] = (0.05, 20.0)

    @staticmethod
    def contains(window: Tuple[float, float], value: float) -> bool:
        return window[0] <= value <= window[1]


class StatisticalThresholds(BaseModel):
    significance: float = 0.01
    negative_control_p: float = 1e-6
    max_gap_window: Tuple[float, float] = (1.0, 5.0)
    correlation_sigmas: float = 3.0


class Settings(BaseModel):
    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    output_dir: Path = Path("results")
    cache_dir: Path = Path(".disbec_cache")

    @field_validator("log_level")
    @classmethod
    def _upper(cls, v: str) -> str:
        return v.upper()


def load_settings(dotenv: bool = True) -> Settings:
    """Build Settings from the environment, reading a .env file first if present."""
    if dotenv:
        load_dotenv()
    raw = {
        "threads": os.getenv("DISBEC_THREADS"),
        "log_level": os.getenv("DISBEC_LOG_LEVEL"),
        "output_dir": os.getenv("DISBEC_OUTPUT_DIR"),
        "cache_dir": os.getenv("DISBEC_CACHE_DIR"),
    }
    settings = Settings(**{k: v for k, v in raw.items() if v not in (None, "")})
    logger.debug(f"Loaded settings: {settings.model_dump()}")
    return settings
