from dataclasses import dataclass, field

import numpy as np

from src.models.grids import ComplexGrid, Potential


@dataclass(frozen=True, eq=False)
class PsiPair:
    """
    Normalized exponentially growing solutions for one fixed k.

    Psi_r = exp(izk) psi_r and Psi_i = 1j * exp(izk) psi_i; both psi tend to 1.
    """

    psi_r: ComplexGrid
    psi_i: ComplexGrid
    k: complex
    iterations: int
    residual: float
    potential: Potential = field(repr=False)


@dataclass(frozen=True, eq=False)
class JostColumns:
    m1: ComplexGrid
    m2: ComplexGrid
    k: complex


@dataclass(frozen=True, eq=False)
class ScatteringTransform:
    """t(k) sampled on a k-grid and set to zero for |k| > K."""

    grid: ComplexGrid
    K: float
    truncated: bool = True

    def __post_init__(self):
        outside = np.abs(self.grid.nodes()) > self.K
        if np.any(self.grid.samples[outside]):
            object.__setattr__(
                self, 'grid', self.grid.with_samples(np.where(outside, 0.0, self.grid.samples))
            )

    @property
    def samples(self) -> np.ndarray:
        return self.grid.samples

    def as_potential(self) -> Potential:
        return Potential(self.grid, self.K)

    def metadata(self) -> dict:
        return {'K': self.K, 'nx': self.grid.nx, 'L': self.grid.L}


@dataclass(frozen=True, eq=False)
class BornDecomposition:
    """t = linear + remainder, ``linear`` being the transform linearized in q."""

    linear: complex
    remainder: complex

    @property
    def total(self) -> complex:
        return self.linear + self.remainder


@dataclass(frozen=True, eq=False)
class PhiPair:
    """k-plane solutions for one fixed z; Phi_r = exp(izk) phi_r, Phi_i = 1j exp(izk) phi_i."""

    phi_r: ComplexGrid
    phi_i: ComplexGrid
    z: complex
    residual: float
    iterations: int = 0
