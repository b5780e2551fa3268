from __future__ import annotations

from pathlib import Path
from typing import List, Literal

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import Settings, get_settings
from src.services.io import HyperKernelDocument, KernelDocument


class ConfigError(RuntimeError):
    """Raised when settings or an experiment run file are inconsistent."""


ExperimentKind = Literal[
    "giant_convergence",
    "threshold_sweep",
    "percolate_polarity",
    "stability",
    "rho_crosscheck",
    "hyper_threshold",
]

_NEEDS_GRAPH_SOURCE = {"giant_convergence", "threshold_sweep", "stability", "rho_crosscheck"}


def validate_runtime_config(settings: Settings) -> None:
    """Validate configuration and abort early if values are inconsistent."""

    logger.info("config resolved", settings=settings.non_secret_dict())

    if settings.CUTNORM_EXACT_MAX_TYPES > 30:
        raise ConfigError("CUTNORM_EXACT_MAX_TYPES above 30 cannot be enumerated")
    if settings.EXHAUSTIVE_PERMUTATION_MAX_N > 10:
        raise ConfigError("EXHAUSTIVE_PERMUTATION_MAX_N above 10 cannot be enumerated")
    if settings.TREESUM_MAX_K > 10:
        raise ConfigError("TREESUM_MAX_K above 10 is not supported by tree enumeration")
    if settings.HYPER_CUTNORM_MAX_ARITY not in (2, 3):
        raise ConfigError("HYPER_CUTNORM_MAX_ARITY must be 2 or 3")

    if settings.GW_POP_CAP < 1000:
        logger.warning(
            "GW_POP_CAP is small; survival estimates will be biased upward",
            pop_cap=settings.GW_POP_CAP,
        )
    if settings.THREADS > 1 and settings.RESULTS_DATABASE_URL and settings.RESULTS_DATABASE_URL.startswith("sqlite"):
        logger.warning("sqlite results database with several threads; writes are serialized", threads=settings.THREADS)


class ExperimentConfig(BaseModel):
    """One experiment per run file; every random draw derives from ``seed``."""

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    name: str | None = None
    experiment_index: int = 0
    seed: int | None = None

    kernel: KernelDocument | None = None
    kernel_file: str | None = None
    matrix_file: str | None = None
    hyperkernel: HyperKernelDocument | None = None
    hyperkernel_file: str | None = None
    q: int | None = None

    model: Literal["bernoulli", "poisson", "multi"] = "bernoulli"
    n: List[int] = Field(default_factory=lambda: [1000])
    c: List[float] = Field(default_factory=lambda: [1.0])
    replicas: int = 1

    deltas: List[float] = Field(default_factory=lambda: [0.0])
    modes: List[Literal["random", "adversarial_greedy"]] = Field(default_factory=lambda: ["random"])
    targets: List[Literal["vertices", "edges"]] = Field(default_factory=lambda: ["vertices", "edges"])

    k_max: int = 5
    gw_reps: int = 10_000
    pop_cap: int | None = None
    hyper_variant: Literal["bernoulli", "poisson_multi"] = "bernoulli"

    tolerance: float | None = None
    csv: bool = True
    svg: bool = False
    out_stem: str | None = None

    @field_validator("n")
    @classmethod
    def _validate_n(cls, value: List[int]) -> List[int]:
        if not value or any(n < 2 for n in value):
            raise ValueError("every n must be >= 2")
        return value

    @field_validator("c")
    @classmethod
    def _validate_c(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("c grid must not be empty")
        if any(c < 0 for c in value):
            raise ValueError("c grid values must be >= 0")
        if list(value) != sorted(value):
            raise ValueError("c grid must be sorted ascending")
        return value

    @field_validator("replicas", "gw_reps", "k_max")
    @classmethod
    def _validate_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("replica and repetition counts must be >= 1")
        return value

    @field_validator("tolerance")
    @classmethod
    def _validate_tolerance(cls, value: float | None) -> float | None:
        if value is not None and value < 0:
            raise ValueError("tolerance must be >= 0")
        return value

    @field_validator("deltas")
    @classmethod
    def _validate_deltas(cls, value: List[float]) -> List[float]:
        if any(not 0.0 <= d <= 1.0 for d in value):
            raise ValueError("deltas must be fractions in [0, 1]")
        return value

    @model_validator(mode="after")
    def _validate_sources(self) -> "ExperimentConfig":
        sources = [s for s in (self.kernel, self.kernel_file, self.matrix_file) if s is not None]
        if self.kind in _NEEDS_GRAPH_SOURCE and len(sources) != 1:
            raise ValueError(f"{self.kind} needs exactly one of kernel, kernel_file, matrix_file")
        if self.kind == "rho_crosscheck" and self.matrix_file:
            raise ValueError("rho_crosscheck needs a kernel, not a matrix")
        if self.kind == "percolate_polarity" and self.q is None:
            raise ValueError("percolate_polarity needs q")
        if self.kind == "hyper_threshold" and (self.hyperkernel is None) == (self.hyperkernel_file is None):
            raise ValueError("hyper_threshold needs exactly one of hyperkernel, hyperkernel_file")
        return self

    def check_files(self, base: Path) -> "ExperimentConfig":
        for attr in ("kernel_file", "matrix_file", "hyperkernel_file"):
            value = getattr(self, attr)
            if value is None:
                continue
            path = Path(value) if Path(value).is_absolute() else base / value
            if not path.is_file():
                raise ConfigError(f"{attr} not found: {path}")
            setattr(self, attr, str(path))
        return self

    @property
    def resolved_seed(self) -> int:
        return get_settings().DEFAULT_SEED if self.seed is None else self.seed

    @property
    def stem(self) -> str:
        return self.out_stem or self.name or self.kind


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    source = Path(path)
    try:
        text = source.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read run file {source}: {exc.strerror or exc}") from exc
    try:
        cfg = ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigError(f"invalid run file {source}: {exc}") from exc
    return cfg.check_files(source.parent)


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentKind",
    "load_experiment_config",
    "validate_runtime_config",
]
