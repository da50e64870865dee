"""
Numerical substrate shared by every solver: the unitary phase e(z, k), solid
Cauchy transforms, spectral derivatives, norms and off-grid evaluation.

The solid Cauchy transform uses the truncated-kernel convolution of Vainikko:
data on [-L, L]^2 is zero-padded to a period of 4L and convolved with the
Fourier transform of 1/(pi z) restricted to the disk of radius 2L,

    K_hat(xi) = -2i (1 - J0(2L |xi|)) / (xi_1 + i xi_2),    K_hat(0) = 0.

The result is the free-space transform at every target z with |z| <= 2L - rho
when the data vanishes outside radius rho.
"""

import logging
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy.special import erfc, j0

from src.models.grids import ComplexGrid, GridSpec
from src.utils.errors import PreconditionError, SupportError

logger = logging.getLogger(__name__)

# Documentation constants for the Sobolev exponents used in the analysis of
# the method. None of them has a finite-grid analogue; they are not enforced.
EXPONENT_NOTES = {
    'p_tilde': 'Lebesgue exponent of the solution space, p_tilde > 2',
    'p': 'Lebesgue exponent of the potential, 1/p_tilde = 1/p - 1/2',
    'r': 'exponent of the L^r bound on psi - 1 in k',
    'r_tilde': 'exponent of the L^r_tilde bound on the scattering transform',
    'r_prime': 'dual exponent of r',
    'epsilon': 'smoothness index W^{eps,p_tilde}; gives <k>^{-eps} decay',
}

# Width (in nodes) of the outer ring on which transformable data must vanish.
EDGE_RING = 2
EDGE_TOLERANCE = 1e-10

ArrayOrGrid = Union[ComplexGrid, np.ndarray]


def e_phase(z, k):
    """exp(i(zk + conj(z)conj(k))) = exp(2i Re(zk)); vectorized."""
    return np.exp(2j * np.real(np.multiply(z, k)))


def _samples(f: ArrayOrGrid) -> np.ndarray:
    return f.samples if isinstance(f, ComplexGrid) else np.asarray(f, dtype=complex)


def _angular_wavenumbers(n: int, spacing: float) -> np.ndarray:
    return 2.0 * np.pi * sfft.fftfreq(n, d=spacing)


@lru_cache(maxsize=32)
def _truncated_kernel_hat(nx: int, L: float) -> np.ndarray:
    h = 2.0 * L / nx
    xi = _angular_wavenumbers(2 * nx, h)
    xi1, xi2 = np.meshgrid(xi, xi, indexing='ij')
    modulus = np.hypot(xi1, xi2)
    denominator = xi1 + 1j * xi2
    with np.errstate(divide='ignore', invalid='ignore'):
        kernel = -2j * (1.0 - j0(2.0 * L * modulus)) / denominator
    kernel[0, 0] = 0.0
    kernel.setflags(write=False)
    return kernel


def edge_ring_mask(nx: int, width: int = EDGE_RING) -> np.ndarray:
    mask = np.zeros((nx, nx), dtype=bool)
    mask[:width, :] = True
    mask[-width:, :] = True
    mask[:, :width] = True
    mask[:, -width:] = True
    return mask


def check_edge_support(samples: np.ndarray, what: str = 'data') -> None:
    scale = np.max(np.abs(samples))
    if scale == 0.0:
        return
    edge = np.max(np.abs(samples[edge_ring_mask(samples.shape[0])]))
    if edge > EDGE_TOLERANCE * scale:
        raise SupportError(
            f"{what} does not vanish on the outer grid ring (relative size {edge / scale:.2e})",
            edge_value=float(edge),
        )


def cauchy_array(samples: np.ndarray, L: float, check: bool = True) -> np.ndarray:
    """Solid Cauchy transform of raw samples; see ``cauchy_transform``."""
    nx = samples.shape[0]
    if check:
        check_edge_support(samples)
    padded = np.zeros((2 * nx, 2 * nx), dtype=complex)
    padded[:nx, :nx] = samples
    convolved = sfft.ifft2(_truncated_kernel_hat(nx, float(L)) * sfft.fft2(padded))
    return convolved[:nx, :nx]


def cauchy_transform(f: ComplexGrid) -> ComplexGrid:
    """
    g with dbar g = f and g -> 0 at infinity, i.e. g = (1/pi) * f convolved with 1/z.

    Raises SupportError when f is not negligible on the outermost node ring.
    """
    return f.with_samples(cauchy_array(f.samples, f.L))


def anti_cauchy_transform(f: ComplexGrid) -> ComplexGrid:
    return f.with_samples(np.conj(cauchy_array(np.conj(f.samples), f.L)))


def _spectral_symbols(nx: int, L: float) -> Tuple[np.ndarray, np.ndarray]:
    xi = _angular_wavenumbers(nx, 2.0 * L / nx)
    xi[nx // 2] = 0.0
    return np.meshgrid(xi, xi, indexing='ij')


def dbar_derivative(f: ArrayOrGrid, L: Optional[float] = None) -> ArrayOrGrid:
    """(d/dx + i d/dy)/2 by FFT on the period 2L, Nyquist mode dropped."""
    samples = _samples(f)
    L = f.L if isinstance(f, ComplexGrid) else L
    xi1, xi2 = _spectral_symbols(samples.shape[0], L)
    out = sfft.ifft2(0.5 * (1j * xi1 - xi2) * sfft.fft2(samples))
    return f.with_samples(out) if isinstance(f, ComplexGrid) else out


def d_derivative(f: ArrayOrGrid, L: Optional[float] = None) -> ArrayOrGrid:
    """(d/dx - i d/dy)/2 by FFT on the period 2L, Nyquist mode dropped."""
    samples = _samples(f)
    L = f.L if isinstance(f, ComplexGrid) else L
    xi1, xi2 = _spectral_symbols(samples.shape[0], L)
    out = sfft.ifft2(0.5 * (1j * xi1 + xi2) * sfft.fft2(samples))
    return f.with_samples(out) if isinstance(f, ComplexGrid) else out


def partial_derivatives(samples: np.ndarray, L: float):
    """Spectral d/dx, d/dy and Laplacian of periodic-compatible samples."""
    xi1, xi2 = _spectral_symbols(samples.shape[0], L)
    spectrum = sfft.fft2(samples)
    dx = sfft.ifft2(1j * xi1 * spectrum)
    dy = sfft.ifft2(1j * xi2 * spectrum)
    laplacian = sfft.ifft2(-(xi1 ** 2 + xi2 ** 2) * spectrum)
    return dx, dy, laplacian


def grid_norm(f: ArrayOrGrid, p: float = 2, h: Optional[float] = None,
              mask: Optional[np.ndarray] = None) -> float:
    """h^2-weighted discrete L^p norm; p = inf gives the max modulus."""
    samples = _samples(f)
    h = f.h if isinstance(f, ComplexGrid) else h
    values = np.abs(samples if mask is None else samples[mask])
    if values.size == 0:
        return 0.0
    if np.isinf(p):
        return float(np.max(values))
    if p < 1:
        raise PreconditionError(f"norm exponent must be >= 1, got {p}", p=p)
    return float((h * h * np.sum(values ** p)) ** (1.0 / p))


def relative_error(estimate: ArrayOrGrid, reference: ArrayOrGrid, p: float = 2,
                   h: float = 1.0, mask: Optional[np.ndarray] = None) -> float:
    """||estimate - reference|| / ||reference||; absolute error when the reference is zero."""
    diff = _samples(estimate) - _samples(reference)
    scale = grid_norm(reference, p, h, mask)
    err = grid_norm(diff, p, h, mask)
    return err / scale if scale > 0 else err


def cauchy_transform_at(f: ArrayOrGrid, points, L: Optional[float] = None,
                        chunk: int = 256) -> np.ndarray:
    """
    (1/pi) sum f(zeta) h^2 / (z - zeta) at arbitrary points.

    Accurate for targets away from the support of f, where the integrand is
    smooth and the trapezoid rule converges spectrally.
    """
    samples = _samples(f)
    L = f.L if isinstance(f, ComplexGrid) else L
    spec = GridSpec(samples.shape[0], L)
    nonzero = samples != 0
    zeta = spec.nodes()[nonzero]
    weights = samples[nonzero] * spec.h ** 2 / np.pi
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    flat = points.ravel()
    out = np.empty(flat.shape, dtype=complex)
    for start in range(0, flat.size, chunk):
        block = flat[start:start + chunk]
        out[start:start + chunk] = (weights[None, :] / (block[:, None] - zeta[None, :])).sum(axis=1)
    return out.reshape(points.shape)


def spectral_interpolate(f: ArrayOrGrid, points, L: Optional[float] = None) -> np.ndarray:
    """Trigonometric interpolant of periodic-compatible samples evaluated at ``points``."""
    samples = _samples(f)
    L = f.L if isinstance(f, ComplexGrid) else L
    nx = samples.shape[0]
    xi = _angular_wavenumbers(nx, 2.0 * L / nx)
    coefficients = sfft.fft2(samples) / (nx * nx)
    coefficients[nx // 2, :] = 0.0
    coefficients[:, nx // 2] = 0.0
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    flat = points.ravel()
    ex = np.exp(1j * np.outer(flat.real + L, xi))
    ey = np.exp(1j * np.outer(flat.imag + L, xi))
    values = np.einsum('pa,ab,pb->p', ex, coefficients, ey)
    return values.reshape(points.shape)


@lru_cache(maxsize=32)
def _cutoff(nx: int, L: float) -> Tuple[np.ndarray, float]:
    h = 2.0 * L / nx
    width = 3.2 * h
    edge = L - 4.5 * width
    interior = edge - 4.0 * width
    if interior <= 0.0:
        raise PreconditionError(
            f"grid too coarse for a localized evaluation (nx={nx}, L={L:g})",
            nx=nx, L=L,
        )
    radius = np.abs(GridSpec(nx, L).nodes())
    chi = 0.5 * erfc((radius - edge) / width)
    chi.setflags(write=False)
    return chi, interior


def localizing_cutoff(spec: GridSpec) -> Tuple[np.ndarray, float]:
    """
    Smooth radial cutoff chi and the radius of the disk where chi is 1.

    chi differs from 1 by less than 1e-8 inside the returned radius and below 1e-10 on
    the grid edge, and it is resolved by the grid, so chi * f can be
    differentiated or interpolated spectrally even when f only decays like 1/z.
    """
    return _cutoff(spec.nx, spec.L)


def interior_mask(spec: GridSpec) -> np.ndarray:
    _, radius = localizing_cutoff(spec)
    return np.abs(spec.nodes()) <= radius


def interpolate_localized(samples: np.ndarray, spec: GridSpec, points,
                          offset: complex = 1.0) -> np.ndarray:
    """Evaluate a function tending to ``offset`` at infinity at interior off-grid points."""
    chi, radius = localizing_cutoff(spec)
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    if np.any(np.abs(points) > radius):
        raise PreconditionError(
            f"evaluation points must lie within radius {radius:g}",
            radius=radius,
        )
    return offset + spectral_interpolate(chi * (samples - offset), points, spec.L)


def radial_cauchy_closed_form(z, radial_integral) -> np.ndarray:
    """
    Cauchy transform of a radial function: (2/z) * int_0^|z| f(s) s ds.

    ``radial_integral(r)`` must return int_0^r f(s) s ds.
    """
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    out = np.zeros_like(z)
    nonzero = r > 0
    out[nonzero] = 2.0 * radial_integral(r[nonzero]) / z[nonzero]
    return out
