"""Functions and operators on the unit circle."""

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft

from src.utils.errors import PreconditionError

MIN_BOUNDARY_NODES = 64


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Samples at theta_j = 2 pi j / m on the unit circle; arc length equals theta."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=complex, copy=True).ravel()
        m = values.size
        if m < MIN_BOUNDARY_NODES or m % 2:
            raise PreconditionError(
                f"boundary functions need an even sample count >= {MIN_BOUNDARY_NODES}, got {m}",
                m=m,
            )
        if not np.all(np.isfinite(values)):
            raise PreconditionError("boundary samples must be finite")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return theta_nodes(self.m)

    @property
    def z(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    def mean(self) -> complex:
        return complex(np.mean(self.values))

    def coefficients(self, modes: int) -> np.ndarray:
        """Fourier coefficients c_n, n = -modes..modes."""
        spectrum = sfft.fft(self.values) / self.m
        return spectrum[np.arange(-modes, modes + 1) % self.m]

    @classmethod
    def from_function(cls, m: int, fn) -> 'BoundaryFunction':
        return cls(fn(theta_nodes(m)))

    @classmethod
    def from_coefficients(cls, coefficients: np.ndarray, m: int) -> 'BoundaryFunction':
        modes = (len(coefficients) - 1) // 2
        spectrum = np.zeros(m, dtype=complex)
        spectrum[np.arange(-modes, modes + 1) % m] = coefficients
        return cls(sfft.ifft(spectrum) * m)

    def to_csv(self, path: str) -> None:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['theta', 're', 'im'])
            for t, v in zip(self.theta, self.values):
                writer.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path: str) -> 'BoundaryFunction':
        with open(path, 'r', newline='') as f:
            rows = list(csv.DictReader(f))
        if not rows or set(rows[0]) != {'theta', 're', 'im'}:
            raise PreconditionError(f"{path} is not a theta,re,im boundary CSV")
        values = np.array([float(r['re']) + 1j * float(r['im']) for r in rows])
        return cls(values)


def theta_nodes(m: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(m) / m


@dataclass(frozen=True, eq=False)
class DtNOperator:
    """Dirichlet-to-Neumann map on Fourier coefficients n = -M..M."""

    modes: int
    matrix: np.ndarray = field(repr=False)
    phantom_id: Optional[str] = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex, copy=True)
        size = 2 * self.modes + 1
        if matrix.shape != (size, size):
            raise PreconditionError(f"DtN matrix must be {size}x{size}", shape=list(matrix.shape))
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.modes, self.modes + 1)

    def apply(self, g: BoundaryFunction) -> BoundaryFunction:
        if g.m < 2 * self.modes + 1:
            raise PreconditionError(
                f"{g.m} boundary samples cannot resolve {self.modes} modes",
                m=g.m, modes=self.modes,
            )
        return BoundaryFunction.from_coefficients(self.matrix @ g.coefficients(self.modes), g.m)

    def to_dict(self) -> dict:
        return {
            'modes': self.modes,
            'matrix_re': self.matrix.real.ravel().tolist(),
            'matrix_im': self.matrix.imag.ravel().tolist(),
            'phantom_id': self.phantom_id,
        }

    def to_json(self, path: str) -> None:
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, data: dict) -> 'DtNOperator':
        modes = int(data['modes'])
        size = 2 * modes + 1
        try:
            matrix = (np.asarray(data['matrix_re'], dtype=float)
                      + 1j * np.asarray(data['matrix_im'], dtype=float)).reshape(size, size)
        except (KeyError, ValueError) as exc:
            raise PreconditionError(f"malformed DtN operator: {exc}")
        return cls(modes, matrix, data.get('phantom_id'))

    @classmethod
    def from_json(cls, path: str) -> 'DtNOperator':
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True, eq=False)
class TraceSolveReport:
    coefficients: np.ndarray = field(repr=False)
    reg: float
    residual_exterior: float
    residual_hilbert: float
    zero_mean_residual: float
    condition: float
    warning: bool = False

    def to_dict(self) -> dict:
        return {
            'coefficients_re': self.coefficients.real.tolist(),
            'coefficients_im': self.coefficients.imag.tolist(),
            'reg': self.reg,
            'residual_exterior': self.residual_exterior,
            'residual_hilbert': self.residual_hilbert,
            'zero_mean_residual': self.zero_mean_residual,
            'condition': self.condition,
            'warning': self.warning,
        }


@dataclass(frozen=True, eq=False)
class InteriorSolution:
    """Solution values at polar collocation nodes (positive radii only)."""

    radii: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    condition: float

    def points(self) -> np.ndarray:
        return self.radii[:, None] * np.exp(1j * self.theta[None, :])
