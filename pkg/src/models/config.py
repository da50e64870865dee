"""
Run configuration and phantom description.

Both are pydantic models so they validate on construction and serialize to the
JSON that is echoed into every artifact. ``RunConfig.config_hash`` is the
SHA-256 of the canonical JSON form.
"""

import hashlib
import json
import os
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.utils.errors import ConfigValidationError

MAX_PHANTOM_SUPPORT = 0.8

# Fields that do not change any computed value; left out of the hash.
HASH_EXCLUDED = {'workers', 'output_dir'}


@dataclass(frozen=True)
class SolverSettings:
    """Krylov and parallelism settings threaded through every solve."""

    tol: float = 1e-10
    max_iterations: int = 500
    restart: int = 50
    workers: int = 1


class Phantom(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['gauss', 'bump', 'two-blob'] = 'gauss'
    amplitude: float = 0.3
    b2_ratio: float = 0.5
    centers: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0)])
    widths: List[float] = Field(default_factory=lambda: [0.25])
    support_radius: float = Field(0.8, gt=0)

    @field_validator('widths')
    @classmethod
    def _positive_widths(cls, widths):
        if not widths or any(w <= 0 for w in widths):
            raise ValueError('widths must be positive')
        return widths

    @model_validator(mode='after')
    def _blob_count(self):
        needed = 2 if self.kind == 'two-blob' else 1
        if len(self.centers) < needed or len(self.widths) < needed:
            raise ValueError(f"phantom kind '{self.kind}' needs {needed} centers and widths")
        return self

    @property
    def identifier(self) -> str:
        digest = hashlib.sha256(self.model_dump_json().encode()).hexdigest()[:12]
        return f"{self.kind}-{digest}"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    nx: int = Field(128, ge=8)
    L: float = Field(2.0, gt=0)
    K: float = Field(8.0, gt=0)
    kgrid_n: int = Field(64, ge=8)
    k_half_width: Optional[float] = Field(None, gt=0)
    modes: int = Field(32, ge=1)
    radial_degree: int = Field(48, ge=4)
    theta_nodes: Optional[int] = Field(None, ge=8)
    boundary_nodes: int = Field(128, ge=64)
    series_n: int = Field(16, ge=1)
    reg: float = Field(1e-8, ge=0)
    kmax: float = Field(8.0, gt=0)
    directions: int = Field(8, ge=1)
    solver_tol: float = Field(1e-10, gt=0)
    max_iterations: int = Field(500, ge=1)
    restart: int = Field(50, ge=1)
    unwrap_tau: float = Field(1e-8, gt=0)
    support_margin: float = Field(0.1, ge=0)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    output_dir: str = 'dbar_output'

    @field_validator('nx', 'kgrid_n')
    @classmethod
    def _power_of_two(cls, value):
        if value & (value - 1):
            raise ValueError('must be a power of two')
        return value

    @field_validator('boundary_nodes', 'theta_nodes')
    @classmethod
    def _even(cls, value):
        if value is not None and value % 2:
            raise ValueError('must be even')
        return value

    @property
    def effective_k_half_width(self) -> float:
        return self.k_half_width if self.k_half_width is not None else self.K / 0.8

    @property
    def effective_theta_nodes(self) -> int:
        return self.theta_nodes if self.theta_nodes is not None else 4 * self.modes

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(
            tol=self.solver_tol,
            max_iterations=self.max_iterations,
            restart=self.restart,
            workers=self.workers,
        )

    def numerics(self) -> dict:
        return self.model_dump(mode='json', exclude=HASH_EXCLUDED)

    def canonical_json(self) -> str:
        return json.dumps(self.numerics(), sort_keys=True, separators=(',', ':'))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


ENV_OVERRIDES = {
    'DBAR_WORKERS': 'workers',
    'DBAR_OUTPUT_DIR': 'output_dir',
}


def _format_validation_error(exc: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()]


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None,
                    environ: Optional[dict] = None) -> Tuple[RunConfig, Optional[Phantom]]:
    """
    Build a RunConfig from defaults, a JSON file, the environment and overrides.

    Later sources win. The JSON file may carry a ``phantom`` object next to the
    RunConfig fields; it is returned separately.
    """
    values = {}
    phantom_values = None
    if path:
        try:
            with open(path, 'r') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigValidationError(f"Could not read config file {path}: {exc}", [str(exc)])
        if not isinstance(data, dict):
            raise ConfigValidationError(f"Config file {path} must hold a JSON object")
        phantom_values = data.pop('phantom', None)
        values.update(data)

    environ = os.environ if environ is None else environ
    for variable, key in ENV_OVERRIDES.items():
        if environ.get(variable):
            values[key] = environ[variable]

    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        config = RunConfig(**values)
        phantom = Phantom(**phantom_values) if phantom_values is not None else None
    except ValidationError as exc:
        errors = _format_validation_error(exc)
        raise ConfigValidationError(f"Invalid configuration: {'; '.join(errors)}", errors)
    return config, phantom


def build_phantom(values: Optional[dict]) -> Phantom:
    try:
        return Phantom(**(values or {}))
    except ValidationError as exc:
        errors = _format_validation_error(exc)
        raise ConfigValidationError(f"Invalid phantom: {'; '.join(errors)}", errors)
