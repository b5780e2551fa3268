from __future__ import annotations

from functools import lru_cache

from pydantic import AliasChoices, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="", case_sensitive=False)

    DEFAULT_SEED: int = 20070101
    THREADS: int = 1
    OUT_DIR: str = "out"
    RESULTS_DATABASE_URL: str | None = Field(
        default=None,
        validation_alias=AliasChoices("RESULTS_DATABASE_URL", "DATABASE_URL"),
    )

    POWER_TOL: float = 1e-10
    POWER_MAX_ITER: int = 100_000
    FIXED_POINT_TOL: float = 1e-10
    FIXED_POINT_MAX_ITER: int = 100_000

    CUTNORM_EXACT_MAX_TYPES: int = 24
    CUTNORM_RESTARTS: int = 20
    ANNEAL_STEPS: int = 100_000
    ANNEAL_T_START: float = 1.0
    ANNEAL_T_END: float = 1e-4
    EXHAUSTIVE_PERMUTATION_MAX_N: int = 8  # 8! = 40320 rearrangements.

    TREESUM_MAX_K: int = 8
    GW_POP_CAP: int = 10_000
    GW_GEN_CAP: int = 10_000

    DENSE_MAX_N: int = 5_000  # Above this a WeightMatrix refuses to densify.
    HYPER_CUTNORM_MAX_TYPES: int = 10
    HYPER_CUTNORM_MAX_ARITY: int = 3

    def non_secret_dict(self) -> dict:
        data = self.model_dump()
        data.pop("RESULTS_DATABASE_URL", None)
        data["RESULTS_DATABASE_ENABLED"] = bool(self.RESULTS_DATABASE_URL)
        return data

    @field_validator("POWER_TOL", "FIXED_POINT_TOL", "ANNEAL_T_START", "ANNEAL_T_END")
    @classmethod
    def _validate_positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("Tolerances and annealing temperatures must be > 0.")
        return value

    @field_validator(
        "THREADS",
        "POWER_MAX_ITER",
        "FIXED_POINT_MAX_ITER",
        "CUTNORM_RESTARTS",
        "ANNEAL_STEPS",
        "GW_POP_CAP",
        "GW_GEN_CAP",
    )
    @classmethod
    def _validate_count(cls, value: int) -> int:
        if value < 1:
            raise ValueError("Counts and iteration caps must be >= 1.")
        return value

    @model_validator(mode="after")
    def _validate_anneal_schedule(self) -> "Settings":
        if self.ANNEAL_T_END >= self.ANNEAL_T_START:
            raise ValueError("ANNEAL_T_END must be below ANNEAL_T_START (geometric cooling).")
        return self


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
