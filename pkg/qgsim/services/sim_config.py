"""
Run configuration: JSON files validated into SimConfig.

Every key of the file is a field below; unknown keys are rejected so a
misspelt option never silently falls back to its default. See
docs/config_schema.md.
"""

import json
from pathlib import Path
from typing import Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import (DEFAULT_M, DEFAULT_OUTPUT_DIR, DEFAULT_TRANSPORT_POINTS, PROFILE_TOL,
                    PROFILE_W_MAX, Z_TAIL_TOL)
from services.errors import ConfigError
from services.spectral_basis import DomainSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ZGridConfig(_Strict):
    M: int = Field(DEFAULT_M, ge=2)
    z_max: Optional[float] = Field(None, gt=0)
    grading: Optional[float] = Field(None, gt=0)
    tail_tol: float = Field(Z_TAIL_TOL, gt=0, lt=1)


class ProfileConfig(_Strict):
    w_max: float = Field(PROFILE_W_MAX, gt=0)
    tol: float = Field(PROFILE_TOL, gt=0, lt=1)


class InitialData(_Strict):
    """
    kind "zero":       identically zero
    kind "expression": numpy expression in x1, x2 (and z for F₀)
    kind "modes":      {"<1-based index>": amplitude}; for F₀ multiplied by `profile`(z)
    kind "file":       .npy array (coefficients for θ₀, gridded layers for F₀)
    """

    kind: Literal["zero", "expression", "modes", "file"] = "zero"
    expr: Optional[str] = None
    modes: Dict[str, float] = Field(default_factory=dict)
    profile: str = "exp(-z)"
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "expression" and not self.expr:
            raise ValueError("initial data of kind 'expression' needs 'expr'")
        if self.kind == "file" and not self.path:
            raise ValueError("initial data of kind 'file' needs 'path'")
        if self.kind == "modes":
            if not self.modes:
                raise ValueError("initial data of kind 'modes' needs a non-empty 'modes' map")
            for key in self.modes:
                if not key.isdigit() or int(key) < 1:
                    raise ValueError(f"mode index '{key}' must be a positive integer")
        return self


class PicardConfig(_Strict):
    enabled: bool = False
    max_iters: int = Field(8, ge=1)
    tol: float = Field(1e-10, gt=0)


class OutputConfig(_Strict):
    dir: str = str(DEFAULT_OUTPUT_DIR)
    every: int = Field(1, ge=1)          # steps between diagnostics rows
    snapshots: bool = False
    snapshot_every: int = Field(10, ge=1)


class SimConfig(_Strict):
    name: str = "run"
    a: float = Field(lt=1)
    domain: DomainSpec = Field(default_factory=DomainSpec)
    n: Optional[int] = Field(None, ge=1)
    mollifier_n: Optional[int] = Field(None, ge=1)
    zgrid: ZGridConfig = Field(default_factory=ZGridConfig)
    profile: ProfileConfig = Field(default_factory=ProfileConfig)
    transport_points: int = Field(DEFAULT_TRANSPORT_POINTS, ge=4)
    dt: Optional[float] = Field(None, gt=0)
    T: float = Field(gt=0)
    F0: InitialData = Field(default_factory=InitialData)
    theta0: InitialData = Field(default_factory=InitialData)
    picard: PicardConfig = Field(default_factory=PicardConfig)
    induced_velocity: Literal["printed", "extension"] = "printed"
    regularized: bool = True
    workers: int = Field(1, ge=1)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _consistent(self):
        if self.n is not None and self.n != self.domain.n:
            self.domain = self.domain.model_copy(update={"n": self.n})
        self.n = self.domain.n
        if self.dt is not None and self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds T={self.T}")
        if self.F0.kind == "modes" and self.F0.modes:
            top = max(int(k) for k in self.F0.modes)
            if top > self.n:
                raise ValueError(f"F0 mode {top} is beyond the cutoff n={self.n}")
        if self.theta0.kind == "modes" and self.theta0.modes:
            top = max(int(k) for k in self.theta0.modes)
            if top > self.n:
                raise ValueError(f"theta0 mode {top} is beyond the cutoff n={self.n}")
        return self

    @property
    def mollifier_index(self) -> int:
        return self.mollifier_n or self.n


def parse_config(data: Union[dict, str]) -> SimConfig:
    """Validate a dict or JSON string; pydantic errors become ConfigError."""
    try:
        if isinstance(data, str):
            return SimConfig.model_validate_json(data)
        return SimConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config:\n{e}")


def load_config(path: Union[str, Path]) -> SimConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    cfg = parse_config(data)
    for init in (cfg.F0, cfg.theta0):
        if init.kind == "file" and not Path(init.path).is_absolute():
            init.path = str((path.parent / init.path).resolve())
    return cfg
