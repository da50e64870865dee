from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from src.models.grids import ComplexGrid, Potential
from src.utils.errors import PreconditionError


@dataclass(frozen=True, eq=False)
class ConvectionField:
    """Real coefficients b1, b2 on a z-grid; ``b`` = (b1 + i b2)/4."""

    b1: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)
    L: float
    support_radius: float
    phantom_id: Optional[str] = None

    def __post_init__(self):
        b1 = np.array(self.b1, copy=True)
        b2 = np.array(self.b2, copy=True)
        if b1.shape != b2.shape:
            raise PreconditionError("b1 and b2 must share a grid", b1=list(b1.shape), b2=list(b2.shape))
        for name, values in (('b1', b1), ('b2', b2)):
            if np.iscomplexobj(values):
                if np.any(values.imag):
                    raise PreconditionError(f"{name} must be real-valued")
                values = values.real
            if not np.all(np.isfinite(values)):
                raise PreconditionError(f"{name} must be finite")
        b1 = np.asarray(b1.real, dtype=float)
        b2 = np.asarray(b2.real, dtype=float)
        b1.setflags(write=False)
        b2.setflags(write=False)
        object.__setattr__(self, 'b1', b1)
        object.__setattr__(self, 'b2', b2)

    @cached_property
    def b(self) -> Potential:
        return Potential(ComplexGrid(self.nx, self.L, (self.b1 + 1j * self.b2) / 4.0), self.support_radius)

    @property
    def nx(self) -> int:
        return self.b1.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.nx

    def is_zero(self) -> bool:
        return not (np.any(self.b1) or np.any(self.b2))

    @classmethod
    def from_b(cls, b: Potential, phantom_id: Optional[str] = None) -> 'ConvectionField':
        return cls(4.0 * b.samples.real, 4.0 * b.samples.imag, b.L, b.support_radius, phantom_id)


@dataclass(frozen=True, eq=False)
class WPair:
    """w_r = exp(-izk) W_r and w_i with W_i = i exp(izk) w_i; both tend to 1."""

    w_r: ComplexGrid
    w_i: ComplexGrid
    k: complex
    residual: float


@dataclass(frozen=True, eq=False)
class PhaseUnwrapResult:
    b: Potential
    v: ComplexGrid
    below_threshold: int
    min_abs_v: float
    tau: float

    @property
    def field(self) -> ConvectionField:
        return ConvectionField.from_b(self.b)


@dataclass(frozen=True)
class EllipticResidual:
    """L2 residual of the second-order equation and 4x that of its first-order reduction."""

    pde: float
    reduced: float

    @property
    def ratio(self) -> float:
        if self.reduced == 0.0:
            return 1.0 if self.pde == 0.0 else float('inf')
        return self.pde / self.reduced
