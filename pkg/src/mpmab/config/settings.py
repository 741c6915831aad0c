from __future__ import annotations

from pathlib import Path

from dotenv import find_dotenv, load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Project-wide constants. Every field can be overridden with an environment
    variable prefixed MPMAB_ (e.g. MPMAB_C_EPS=2.5); load_settings also reads them from
    the nearest .env file, without overriding variables already set.
    """

    model_config = SettingsConfigDict(
        env_prefix="MPMAB_", extra="ignore", frozen=True
    )

    # ---------- Desk-scale schedule constants ----------
    C_EPS: float = 3.0
    C_T0: float = 20.0

    # ---------- Lower-bound verification ----------
    LOSS_TOLERANCE: float = 1e-12
    CLAIM_GAMMA: float = 0.01
    CLAIM_WINDOW: int = 2
    CLAIM_MIN_POINTS: int = 100
    CLAIM_MIN_RADIUS: float = 0.1
    CLAIM_MAX_PERTURBATION: float = 0.001

    # ---------- Experiment harness ----------
    TRAJECTORY_GROWTH: float = 1.1
    INSTANCE_LOW: float = 0.05
    INSTANCE_HIGH: float = 0.95

    # ---------- Logging ----------
    LOG_LEVEL: str = "INFO"

    # ---------- Project paths ----------
    PROJECT_ROOT: Path = Path(__file__).resolve().parents[3]

    OUTPUTS_DIR: Path = PROJECT_ROOT / "outputs"


def load_settings() -> Settings:
    # nearest .env searching up from the working directory
    load_dotenv(find_dotenv(usecwd=True), override=False)
    return Settings()


settings = load_settings()
