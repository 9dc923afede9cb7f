"""
Settings - Réglages du processus lus depuis l'environnement (préfixe FLOWCELL_)
"""

import logging
from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class FlowcellSettings(BaseSettings):
    """
    Réglages indépendants du run

    FLOWCELL_THREADS plafonne le pool de threads numba (0 = automatique),
    FLOWCELL_LOG_LEVEL fixe le niveau de logging par défaut et
    FLOWCELL_RUN_BENCH active les tests de temps d'exécution.
    """
    model_config = SettingsConfigDict(env_prefix="FLOWCELL_", extra="ignore")

    threads: int = Field(default=0, ge=0, description="Threads numba (0 = auto)")
    log_level: str = Field(default="INFO", description="Niveau de logging")
    run_bench: bool = Field(default=False, description="Active les benchmarks de temps")

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Niveau de logging inconnu: {v}")
        return level


@lru_cache(maxsize=1)
def get_settings() -> FlowcellSettings:
    return FlowcellSettings()
