"""
Uniform square grids of complex samples.

Node (i, j) sits at z = (-L + i*h) + 1j*(-L + j*h) with h = 2L/nx, so axis 0 of
``samples`` runs along x and axis 1 along y. The same layout serves the z-plane
and the k-plane.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from src.utils.errors import PreconditionError, SupportError

# Potentials must vanish outside (1 - SUPPORT_MARGIN) * L.
SUPPORT_MARGIN = 0.2


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Layout of a grid without samples."""

    nx: int
    L: float

    def __post_init__(self):
        if not isinstance(self.nx, (int, np.integer)) or self.nx < 8 or not _is_power_of_two(int(self.nx)):
            raise PreconditionError(f"nx must be a power of two >= 8, got {self.nx}", nx=self.nx)
        if not np.isfinite(self.L) or self.L <= 0:
            raise PreconditionError(f"L must be positive, got {self.L}", L=self.L)
        object.__setattr__(self, 'nx', int(self.nx))
        object.__setattr__(self, 'L', float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.nx

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.nx)

    def nodes(self) -> np.ndarray:
        x = self.axis
        return x[:, None] + 1j * x[None, :]

    def index_of(self, value: complex):
        """Indices of the node nearest to ``value``."""
        i = int(round((value.real + self.L) / self.h)) % self.nx
        j = int(round((value.imag + self.L) / self.h)) % self.nx
        return i, j


@dataclass(frozen=True, eq=False)
class ComplexGrid:
    nx: int
    L: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        spec = GridSpec(self.nx, self.L)
        samples = np.array(self.samples, dtype=np.complex128, copy=True)
        if samples.shape != (spec.nx, spec.nx):
            raise PreconditionError(
                f"samples must have shape ({spec.nx}, {spec.nx}), got {samples.shape}",
                shape=list(samples.shape),
            )
        if not np.all(np.isfinite(samples)):
            raise PreconditionError("grid samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, 'nx', spec.nx)
        object.__setattr__(self, 'L', spec.L)
        object.__setattr__(self, 'samples', samples)

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.nx, self.L)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.nx

    def nodes(self) -> np.ndarray:
        return self.spec.nodes()

    def with_samples(self, samples: np.ndarray) -> 'ComplexGrid':
        return ComplexGrid(self.nx, self.L, samples)

    def same_layout(self, other: 'ComplexGrid') -> bool:
        return self.nx == other.nx and self.L == other.L

    @classmethod
    def zeros(cls, nx: int, L: float) -> 'ComplexGrid':
        return cls(nx, L, np.zeros((nx, nx), dtype=complex))

    @classmethod
    def from_function(cls, nx: int, L: float, fn: Callable[[np.ndarray], np.ndarray]) -> 'ComplexGrid':
        z = GridSpec(nx, L).nodes()
        return cls(nx, L, np.broadcast_to(fn(z), z.shape))


@dataclass(frozen=True, eq=False)
class Potential:
    """A grid function known to vanish outside ``support_radius``."""

    grid: ComplexGrid
    support_radius: float
    margin: float = SUPPORT_MARGIN

    def __post_init__(self):
        limit = self.grid.L * (1.0 - self.margin)
        if not (0.0 < self.support_radius <= limit + 1e-12):
            raise SupportError(
                f"support radius {self.support_radius:g} must lie in (0, {limit:g}]",
                support_radius=self.support_radius,
                L=self.grid.L,
            )
        outside = np.abs(self.grid.nodes()) > self.support_radius
        masked = np.where(outside, 0.0, self.grid.samples)
        object.__setattr__(self, 'grid', self.grid.with_samples(masked))
        object.__setattr__(self, 'support_radius', float(self.support_radius))

    @property
    def samples(self) -> np.ndarray:
        return self.grid.samples

    @property
    def nx(self) -> int:
        return self.grid.nx

    @property
    def L(self) -> float:
        return self.grid.L

    @property
    def h(self) -> float:
        return self.grid.h

    def nodes(self) -> np.ndarray:
        return self.grid.nodes()

    def support_mask(self) -> np.ndarray:
        return np.abs(self.nodes()) <= self.support_radius

    def with_samples(self, samples: np.ndarray) -> 'Potential':
        return Potential(self.grid.with_samples(samples), self.support_radius, self.margin)

    def scaled(self, factor: complex) -> 'Potential':
        return self.with_samples(factor * self.samples)

    def is_zero(self) -> bool:
        return not np.any(self.samples)

    @classmethod
    def from_samples(cls, samples: np.ndarray, L: float, support_radius: float) -> 'Potential':
        samples = np.asarray(samples)
        return cls(ComplexGrid(samples.shape[0], L, samples), support_radius)
