"""
Link between the convection coefficients and the scattering potential.

With b = (b1 + i b2)/4, a real solution u of Lap u + b1 u_x + b2 u_y = 0 gives
w = du solving dbar w + b w + conj(b) conj(w) = 0, and

    q = conj(b) exp(C b - conj(C b)) = conj(b) exp(2i Im C b),

so that Psi = exp(C b) W solves the physical-space dbar problem with q.
"""

import logging
from typing import Optional

import numpy as np

from src.models.config import SolverSettings
from src.models.convection import ConvectionField, EllipticResidual, PhaseUnwrapResult, WPair
from src.models.grids import ComplexGrid, Potential
from src.services.dbar_forward import DEFAULT_SETTINGS, solve_dbar_system
from src.services.field_grids import (
    cauchy_array,
    cauchy_transform_at,
    check_edge_support,
    dbar_derivative,
    d_derivative,
    e_phase,
    grid_norm,
    interior_mask,
    localizing_cutoff,
    partial_derivatives,
)
from src.utils.errors import PreconditionError
from src.utils.krylov import solve_real_linear

logger = logging.getLogger(__name__)

VARIANTS = {'r': 1, 'i': -1}

DEFAULT_TAU = 1e-8


def q_from_b(f: ConvectionField) -> Potential:
    b = f.b
    check_edge_support(b.samples, 'convection coefficient')
    cb = cauchy_array(b.samples, b.L)
    return b.with_samples(np.conj(b.samples) * np.exp(2j * cb.imag))


def einvb(f: ConvectionField) -> ComplexGrid:
    """exp(-C b) on the z-grid."""
    return f.b.grid.with_samples(np.exp(-cauchy_array(f.b.samples, f.L)))


def einvb_on(f: ConvectionField, points) -> np.ndarray:
    """exp(-C b) at off-grid points away from the support of b."""
    return np.exp(-cauchy_transform_at(f.b.samples, points, f.L))


def _variant_sign(variant: str) -> int:
    if variant not in VARIANTS:
        raise PreconditionError(f"variant must be 'r' or 'i', got {variant!r}", variant=variant)
    return VARIANTS[variant]


def _w_density(b: np.ndarray, phase: np.ndarray, sigma: int, w: np.ndarray) -> np.ndarray:
    return b * w + sigma * phase * np.conj(b) * np.conj(w)


def _solve_w(f: ConvectionField, k: complex, sigma: int, settings: SolverSettings):
    b = f.b.samples
    L = f.L
    phase = e_phase(f.b.nodes(), -k)

    def apply(u):
        return u + cauchy_array(_w_density(b, phase, sigma, u), L, check=False)

    rhs = -cauchy_array(b + sigma * phase * np.conj(b), L, check=False)
    return solve_real_linear(
        apply, rhs,
        tol=settings.tol,
        max_iterations=settings.max_iterations,
        restart=settings.restart,
    )


def solve_w(f: ConvectionField, k: complex, variant: str,
            settings: SolverSettings = DEFAULT_SETTINGS) -> ComplexGrid:
    """
    Normalized whole-plane solution: dbar w + b w + sigma e(z,-k) conj(b) conj(w) = 0,
    w -> 1, sigma = +1 for W_r = exp(izk) w and -1 for W_i = i exp(izk) w.
    """
    sigma = _variant_sign(variant)
    check_edge_support(f.b.samples, 'convection coefficient')
    return f.b.grid.with_samples(1.0 + _solve_w(f, k, sigma, settings).solution)


def solve_w_pair(f: ConvectionField, k: complex,
                 settings: SolverSettings = DEFAULT_SETTINGS) -> WPair:
    check_edge_support(f.b.samples, 'convection coefficient')
    r = _solve_w(f, k, 1, settings)
    i = _solve_w(f, k, -1, settings)
    return WPair(
        w_r=f.b.grid.with_samples(1.0 + r.solution),
        w_i=f.b.grid.with_samples(1.0 + i.solution),
        k=complex(k),
        residual=max(r.residual, i.residual),
    )


def w_trace(f: ConvectionField, k: complex, variant: str, points,
            w: Optional[ComplexGrid] = None,
            settings: SolverSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """
    w at off-grid points outside supp b through w = 1 - C[b w + sigma e conj(b) conj(w)].
    """
    sigma = _variant_sign(variant)
    if w is None:
        w = solve_w(f, k, variant, settings)
    phase = e_phase(f.b.nodes(), -k)
    density = _w_density(f.b.samples, phase, sigma, w.samples)
    return 1.0 - cauchy_transform_at(density, points, f.L)


def phase_unwrap(q: Potential, tau: float = DEFAULT_TAU,
                 settings: SolverSettings = DEFAULT_SETTINGS) -> PhaseUnwrapResult:
    """
    Recover b from q = conj(b) exp(2i Im C b).

    Solves dbar v + conj(q) conj(v) = 0, v -> 1, whose solution is exp(-C b),
    then b = conj(q) conj(v) / v where |v| > tau * max|v| and b = q elsewhere.
    """
    check_edge_support(q.samples, 'potential')
    result = solve_dbar_system(np.conj(q.samples), q.L, 1, settings)
    v = 1.0 + result.solution
    modulus = np.abs(v)
    threshold = tau * float(np.max(modulus))
    safe = modulus > threshold
    b = np.where(safe, np.conj(q.samples) * np.conj(v) / np.where(safe, v, 1.0), q.samples)
    below = int(np.count_nonzero(~safe & q.support_mask()))
    min_v = float(np.min(modulus[q.support_mask()])) if np.any(q.support_mask()) else float(np.min(modulus))
    if below:
        logger.warning(f"phase unwrap: {below} nodes with |v| <= {threshold:.3e}; fell back to b = q there")
    logger.debug(f"phase unwrap: min |v| on support = {min_v:.4f}")
    return PhaseUnwrapResult(
        b=q.with_samples(b),
        v=q.grid.with_samples(v),
        below_threshold=below,
        min_abs_v=min_v,
        tau=tau,
    )


def elliptic_residual(f: ConvectionField, u: np.ndarray) -> EllipticResidual:
    """
    Residuals of Lap u + b1 u_x + b2 u_y and 4 (dbar w + conj(b) conj(w) + b w),
    w = du, on interior nodes. The two agree for real u since dbar d = Lap/4.
    """
    u = np.asarray(u)
    if np.iscomplexobj(u) and np.any(u.imag):
        raise PreconditionError("u must be real-valued")
    spec = f.b.grid.spec
    chi, _ = localizing_cutoff(spec)
    mask = interior_mask(spec)
    localized = chi * np.real(u)

    ux, uy, laplacian = partial_derivatives(localized, f.L)
    pde = laplacian + f.b1 * ux + f.b2 * uy

    b = f.b.samples
    w = d_derivative(localized, f.L)
    reduced = 4.0 * (dbar_derivative(w, f.L) + np.conj(b) * np.conj(w) + b * w)

    return EllipticResidual(
        pde=grid_norm(pde, 2, f.h, mask),
        reduced=grid_norm(reduced, 2, f.h, mask),
    )
