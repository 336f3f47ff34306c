"""Configuration settings for penaltyselect using Pydantic v2."""

import json
import os
from pathlib import Path
from typing import Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, model_validator

load_dotenv()

SEED_ENV_VAR = "PENALTYSELECT_SEED"

Subcommand = Literal["validate", "solve", "simulate", "experiment"]
ProblemKind = Literal["mcis", "mpis"]
MetricName = Literal["max", "total"]


class ConfigurationError(Exception):
    """Raised for unusable configuration values."""

    pass


class ToleranceConfig(BaseModel):
    """Numerical tolerances shared by every module."""

    row_sum: float = Field(
        default=1e-9, gt=0, description="Row-stochasticity tolerance for penalties"
    )
    likelihood_sum: float = Field(
        default=1e-9, gt=0, description="Column-sum tolerance for likelihood tables"
    )
    equivalence: float = Field(
        default=1e-9,
        gt=0,
        description="KL threshold below which two hypotheses are observationally equivalent",
    )
    coverage: float = Field(
        default=1e-9, gt=0, description="Tolerance on z(I) = z(D) termination"
    )
    gamma: float = Field(
        default=1e-9,
        gt=0,
        description="Relative slack when checking solutions against certificate bounds",
    )


class SolverConfig(BaseModel):
    """Limits for exhaustive enumeration."""

    brute_force_max_sources: int = Field(
        default=20, ge=1, description="Largest n accepted by brute-force oracles"
    )
    gamma_exact_max_sources: int = Field(
        default=12, ge=1, description="Largest n accepted by exhaustive gamma"
    )
    certificate_max_sources: int = Field(
        default=12,
        ge=0,
        description="Largest n for which the CLI attaches a brute-force certificate",
    )


class SimulationConfig(BaseModel):
    """Defaults for belief simulations."""

    horizon: int = Field(default=50, ge=0, description="Number of observation steps")
    delta: float = Field(default=0.1, gt=0, le=1, description="Failure probability")
    mu_th: float = Field(
        default=0.01, gt=0, lt=1, description="Belief threshold for ruled-out classes"
    )


class ExperimentConfig(BaseModel):
    """Defaults for batch experiments."""

    threads: int = Field(default=1, ge=1, description="Worker count for trials")
    max_resample_attempts: int = Field(
        default=100, ge=1, description="Threshold resamples before a trial is skipped"
    )


class Settings(BaseModel):
    """Main configuration for the application."""

    tolerances: ToleranceConfig = ToleranceConfig()
    solver: SolverConfig = SolverConfig()
    simulation: SimulationConfig = SimulationConfig()
    experiment: ExperimentConfig = ExperimentConfig()
    seed: Optional[int] = Field(default=None, description="Default master seed")

    def save_to_file(self, path: Union[str, Path]):
        """Save the current settings to a file."""
        with open(path, "w") as f:
            json.dump(self.model_dump(), f, indent=2)


class CliConfig(BaseModel):
    """Validated options of a single CLI invocation."""

    subcommand: Subcommand
    input_path: Path
    output_path: Optional[Path] = None
    seed: Optional[int] = None
    tolerances: ToleranceConfig = ToleranceConfig()
    problem: Optional[ProblemKind] = None
    metric: MetricName = "max"
    bounds: Optional[list[float]] = None
    budget: Optional[float] = None
    brute_force: bool = False
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_flags(self) -> "CliConfig":
        if not self.input_path.exists():
            raise ValueError(f"path does not exist: {self.input_path}")
        if self.subcommand != "solve":
            return self
        if self.problem is None:
            raise ValueError("exactly one of --mcis or --mpis is required")
        if self.problem == "mcis":
            if self.budget is not None:
                raise ValueError("--budget applies to --mpis only")
            if self.bounds is None:
                raise ValueError("--mcis requires --bounds or --bounds-file")
        if self.problem == "mpis":
            if self.bounds is not None:
                raise ValueError("--bounds applies to --mcis only")
            if self.budget is None:
                raise ValueError("--mpis requires --budget")
        return self


_settings: Optional[Settings] = None


def init_settings(config_path: Optional[Union[str, Path]] = None) -> Settings:
    """Load settings from file or use defaults."""
    global _settings

    if config_path and Path(config_path).exists():
        with open(config_path, "r") as f:
            config_data = json.load(f)
        _settings = Settings(**config_data)
    else:
        _settings = Settings()

    return _settings


def get_settings() -> Settings:
    """Get the global settings instance, creating defaults on first use."""
    if _settings is None:
        return init_settings()
    return _settings


def resolve_seed(cli_seed: Optional[int]) -> Optional[int]:
    """Pick the effective seed: environment first, then CLI, then settings."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is not None and raw.strip():
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")
    if cli_seed is not None:
        return cli_seed
    return get_settings().seed
