"""Run configuration: a JSON file with one section per component.

Unknown keys are rejected.  Command-line flags override file values.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .frankwolfe import FWConfig, SGDConfig
from .pipeline import GridConfig
from .targeting import TargetingConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    lambdas: list[float] = Field(default_factory=lambda: [float(v) for v in range(1, 11)])
    betas: list[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1, 0.25, 0.5])
    alpha: float = Field(0.1, ge=0.0, le=0.5)
    exhaustive_grid: bool = False
    t_grid_size: int = Field(101, ge=1)
    oracle_grid_n: int = Field(20_000, ge=1)

    @field_validator("lambdas")
    @classmethod
    def _ascending(cls, v):
        if not v or any(x < 0 for x in v) or any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("lambdas must be a nonempty ascending list of nonnegative numbers")
        return v

    @field_validator("betas")
    @classmethod
    def _nonneg(cls, v):
        if not v or any(x < 0 for x in v):
            raise ValueError("betas must be a nonempty list of nonnegative numbers")
        return v


class FWSection(_Section):
    iterations: Optional[int] = Field(None, ge=1)
    precision: Optional[float] = Field(None, gt=0.0, le=1.0)
    intercept: bool = True
    warm_start: bool = False

    def resolved_iterations(self) -> int:
        if self.iterations is not None:
            return self.iterations
        if self.precision is not None:
            return FWConfig.from_precision(self.precision).iterations
        return FWConfig().iterations


class SGDSection(_Section):
    tolerance: float = Field(1e-3, gt=0.0)
    learning_rate: float = Field(1e-2, gt=0.0)
    batch_fraction: float = Field(0.2, gt=0.0, le=1.0)
    max_iterations: int = Field(1000, ge=1)


class TargetingSection(_Section):
    gamma_tol: float = Field(0.025, ge=0.0)
    K: int = Field(5, ge=0)


class NuisanceSection(_Section):
    kind: str = "glm"

    @field_validator("kind")
    @classmethod
    def _kind(cls, v):
        if v not in ("glm", "oracle"):
            raise ValueError("nuisance kind must be 'glm' or 'oracle'")
        return v


class RunConfig(_Section):
    grid: GridSection = Field(default_factory=GridSection)
    fw: FWSection = Field(default_factory=FWSection)
    sgd: SGDSection = Field(default_factory=SGDSection)
    targeting: TargetingSection = Field(default_factory=TargetingSection)
    nuisance: NuisanceSection = Field(default_factory=NuisanceSection)

    def grid_config(self, mode: str) -> GridConfig:
        sgd = SGDConfig(**self.sgd.model_dump())
        fw = FWConfig(iterations=self.fw.resolved_iterations(), sgd=sgd,
                      intercept=self.fw.intercept, warm_start=self.fw.warm_start)
        g = self.grid
        return GridConfig(tuple(g.lambdas), tuple(g.betas), g.alpha, mode, fw,
                          TargetingConfig(**self.targeting.model_dump()), g.exhaustive_grid,
                          g.t_grid_size, g.oracle_grid_n)

    def override(self, section: str, **values) -> "RunConfig":
        """Copy with non-None ``values`` replacing fields of ``section``."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        data = self.model_dump()
        data[section].update(values)
        return RunConfig.model_validate(data)


class ConfigError(ValueError):
    pass


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return validate_config(raw, str(path))


def validate_config(raw, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"{source}: {msgs}") from exc
