"""
Run configuration: typed sections validated by pydantic, loaded from JSON merged over defaults.
"""
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GammaConfig(_Section):
    mean: float = Field(gt=0)
    sd: float = Field(gt=0)
    u_max: Optional[int] = Field(default=None, ge=1)


class ModelConfig(_Section):
    id: Literal[1, 2, 3] = 1
    variant: Literal["day-of-week", "aggregated", "naive"] = "day-of-week"
    serial_interval: GammaConfig = GammaConfig(mean=6.5, sd=4.2)
    incubation: GammaConfig = GammaConfig(mean=5.5, sd=2.3)
    seed_days: Optional[int] = Field(default=None, ge=0)


class FilterSettings(_Section):
    n_particles: int = Field(default=1000, ge=2)
    lag: Optional[int] = Field(default=None, ge=1)
    resample_on_missing: bool = False


class PMMHSettings(_Section):
    chains: int = Field(default=4, ge=2)
    n_particles: Optional[int] = Field(default=None, ge=2)
    adapt_interval: int = Field(default=100, ge=1)
    det_tolerance: float = Field(default=0.2, gt=0)
    max_adapt_iterations: int = Field(default=2000, ge=1)
    chunk_size: int = Field(default=100, ge=1)
    burn_in: int = Field(default=100, ge=0)
    rhat_threshold: float = Field(default=1.05, gt=1)
    min_ess: float = Field(default=100.0, gt=0)
    max_iterations: int = Field(default=10000, ge=1)
    max_workers: Optional[int] = Field(default=None, ge=1)


class MarginalSettings(_Section):
    n_theta: int = Field(default=100, ge=1)
    n_particles: Optional[int] = Field(default=None, ge=2)
    max_retries: int = Field(default=10, ge=0)


class ProjectionSettings(_Section):
    horizon: int = Field(default=28, ge=0)
    elimination: bool = False
    elimination_window: int = Field(default=28, ge=1)
    peak_window: Optional[int] = Field(default=None, ge=2)


class EvaluationSettings(_Section):
    levels: List[float] = [0.5, 0.95]
    holdout_days: int = Field(default=0, ge=0)

    @field_validator("levels")
    @classmethod
    def _levels_in_range(cls, levels: List[float]) -> List[float]:
        if not levels or any(not 0 < level <= 1 for level in levels):
            raise ValueError("coverage levels must lie in (0, 1]")
        return levels


class SimulationSettings(_Section):
    days: int = Field(default=100, ge=1)
    theta: Dict[str, float] = {"sigma": 0.15, "phi": 0.02}
    start_date: str = "2020-02-26"
    seed_incidence: float = Field(default=10.0, ge=0)
    initial_R: Optional[float] = Field(default=None, gt=0)
    imports: Optional[List[float]] = None


class OutputSettings(_Section):
    directory: str = "output"
    plots: bool = False


class RunConfig(_Section):
    """Every setting of a run; unknown keys are rejected."""
    seed: int = Field(default=0, ge=0)
    model: ModelConfig = ModelConfig()
    filter: FilterSettings = FilterSettings()
    pmmh: PMMHSettings = PMMHSettings()
    marginal: MarginalSettings = MarginalSettings()
    projection: ProjectionSettings = ProjectionSettings()
    evaluation: EvaluationSettings = EvaluationSettings()
    simulation: SimulationSettings = SimulationSettings()
    output: OutputSettings = OutputSettings()

    def likelihood_particles(self) -> int:
        """Particles per PMMH likelihood estimate; falls back to the filter's N."""
        return self.pmmh.n_particles or self.filter.n_particles

    def smoothing_particles(self) -> int:
        """Particles per marginal smoothing block; falls back to the filter's N."""
        return self.marginal.n_particles or self.filter.n_particles


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively overlay ``override`` on ``base`` without mutating either."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load a RunConfig.

    Args:
        path: JSON file merged over the built-in defaults; None uses the defaults only
        overrides: Nested values applied last (command-line flags)

    Returns:
        Validated RunConfig

    Raises:
        FileNotFoundError: ``path`` does not exist
        ValueError: the file is not valid JSON or fails validation
    """
    settings = RunConfig().model_dump()
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                user_config = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"config file {path} is not valid JSON: {e}") from e
        settings = deep_merge(settings, user_config)
        logger.info(f"Loaded config from {path}")
    if overrides:
        settings = deep_merge(settings, overrides)
    return RunConfig.model_validate(settings)


__all__ = ["RunConfig", "load_config", "deep_merge", "ValidationError"]
