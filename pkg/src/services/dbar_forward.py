"""
Physical-space dbar problem and the scattering transform.

For fixed k the normalized solutions psi = exp(-izk) Psi solve

    dbar psi + s * q(z) e(z, -k) conj(psi) = 0,    psi -> 1,

with s = +1 for psi_r and s = -1 for psi_i. With u = psi - 1 this is the
second-kind equation u + s C[a conj u] = -s C[a], a = q e(., -k), solved by
real-linear GMRES.

The transform is normalized as t(k) = -(i/pi) int e(z,k) conj(q) m1 dmu with
m1 = (psi_r + psi_i)/2, which is the form that makes the k-plane equation and
the reconstruction formula mirror each other exactly.
"""

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.models.config import SolverSettings
from src.models.grids import ComplexGrid, GridSpec, Potential
from src.models.scattering import BornDecomposition, JostColumns, PsiPair, ScatteringTransform
from src.services.field_grids import (
    cauchy_array,
    check_edge_support,
    dbar_derivative,
    d_derivative,
    e_phase,
    grid_norm,
    interior_mask,
    interpolate_localized,
    localizing_cutoff,
)
from src.utils.errors import PreconditionError
from src.utils.krylov import KrylovResult, solve_real_linear
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = SolverSettings()


def _check_sign(sign: int) -> int:
    if sign not in (1, -1):
        raise PreconditionError(f"sign must be +1 or -1, got {sign}", sign=sign)
    return int(sign)


def solve_dbar_system(a: np.ndarray, L: float, s: int,
                      settings: SolverSettings = DEFAULT_SETTINGS) -> KrylovResult:
    """Solve u + s C[a conj u] = -s C[a] on the grid of half-width L."""

    def apply(u):
        return u + s * cauchy_array(a * np.conj(u), L, check=False)

    rhs = -s * cauchy_array(a, L, check=False)
    return solve_real_linear(
        apply, rhs,
        tol=settings.tol,
        max_iterations=settings.max_iterations,
        restart=settings.restart,
    )


def _solve_psi(q: Potential, k: complex, sign: int, settings: SolverSettings) -> KrylovResult:
    sign = _check_sign(sign)
    check_edge_support(q.samples, 'potential')
    a = q.samples * e_phase(q.nodes(), -k)
    return solve_dbar_system(a, q.L, sign, settings)


def solve_psi(q: Potential, k: complex, sign: int,
              settings: SolverSettings = DEFAULT_SETTINGS) -> ComplexGrid:
    """psi_r (sign=+1) or psi_i (sign=-1) on the z-grid of ``q``."""
    result = _solve_psi(q, k, sign, settings)
    return q.grid.with_samples(1.0 + result.solution)


def solve_psi_pair(q: Potential, k: complex,
                   settings: SolverSettings = DEFAULT_SETTINGS) -> PsiPair:
    r = _solve_psi(q, k, 1, settings)
    i = _solve_psi(q, k, -1, settings)
    logger.debug(f"psi pair at k={k}: iterations {r.iterations}+{i.iterations}")
    return PsiPair(
        psi_r=q.grid.with_samples(1.0 + r.solution),
        psi_i=q.grid.with_samples(1.0 + i.solution),
        k=complex(k),
        iterations=r.iterations + i.iterations,
        residual=max(r.residual, i.residual),
        potential=q,
    )


def transform_from_pair(pair: PsiPair) -> complex:
    q = pair.potential
    mask = q.support_mask()
    z = q.nodes()[mask]
    m1 = 0.5 * (pair.psi_r.samples + pair.psi_i.samples)[mask]
    integrand = e_phase(z, pair.k) * np.conj(q.samples[mask]) * m1
    return complex(-1j / np.pi * q.h ** 2 * np.sum(integrand))


def scattering_transform_volume(q: Potential, k: complex,
                                settings: SolverSettings = DEFAULT_SETTINGS) -> complex:
    if q.is_zero():
        return 0j
    return transform_from_pair(solve_psi_pair(q, k, settings))


def born_transform(q: Potential, k: complex) -> complex:
    """Linearization of t in q: -(i/pi) int e(z,k) conj(q) dmu."""
    mask = q.support_mask()
    integrand = e_phase(q.nodes()[mask], k) * np.conj(q.samples[mask])
    return complex(-1j / np.pi * q.h ** 2 * np.sum(integrand))


def born_decomposition(q: Potential, k: complex,
                       settings: SolverSettings = DEFAULT_SETTINGS) -> BornDecomposition:
    linear = born_transform(q, k)
    return BornDecomposition(linear, scattering_transform_volume(q, k, settings) - linear)


def k_grid(n: int, half_width: float) -> GridSpec:
    return GridSpec(n, half_width)


def scattering_grid(q: Potential, kspec: GridSpec, K: float,
                    settings: SolverSettings = DEFAULT_SETTINGS) -> ScatteringTransform:
    """
    Tabulate t on every node of ``kspec`` with |k| <= K (k = 0 included); zero elsewhere.
    """
    if K > 0.8 * kspec.L + 1e-12:
        raise PreconditionError(
            f"truncation radius K={K:g} must not exceed 0.8 * k-grid half-width {kspec.L:g}",
            K=K, half_width=kspec.L,
        )
    knodes = kspec.nodes()
    indices = list(zip(*np.nonzero(np.abs(knodes) <= K)))
    values = np.zeros((kspec.nx, kspec.nx), dtype=complex)

    if not q.is_zero():
        logger.info(f"Computing volume scattering transform at {len(indices)} k nodes")
        results = ordered_map(
            lambda k: scattering_transform_volume(q, k, settings),
            [complex(knodes[idx]) for idx in indices],
            workers=settings.workers,
            label='k',
        )
        for idx, value in zip(indices, results):
            values[idx] = value

    return ScatteringTransform(ComplexGrid(kspec.nx, kspec.L, values), float(K))


def jost_columns(pair: PsiPair) -> JostColumns:
    psi_r = pair.psi_r.samples
    psi_i = pair.psi_i.samples
    m1 = 0.5 * (psi_r + psi_i)
    m2 = 0.5 * e_phase(pair.psi_r.nodes(), -pair.k) * (np.conj(psi_i) - np.conj(psi_r))
    return JostColumns(pair.psi_r.with_samples(m1), pair.psi_r.with_samples(m2), pair.k)


def dsys_residual(j: JostColumns, q: Potential) -> Tuple[float, float]:
    """
    L2 residuals on interior nodes of dbar m1 = q m2 and (d + ik) m2 = conj(q) m1.
    """
    spec = q.grid.spec
    chi, _ = localizing_cutoff(spec)
    mask = interior_mask(spec)
    m1 = j.m1.samples
    m2 = j.m2.samples
    first = dbar_derivative(chi * (m1 - 1.0), q.L) - q.samples * m2
    second = d_derivative(chi * m2, q.L) + 1j * j.k * chi * m2 - np.conj(q.samples) * m1
    return grid_norm(first, 2, q.h, mask), grid_norm(second, 2, q.h, mask)


def jost_identity_residual(j: JostColumns, q: Potential) -> float:
    """max |m1 - 1 - C[q m2]| on interior nodes."""
    mask = interior_mask(q.grid.spec)
    deviation = j.m1.samples - 1.0 - cauchy_array(q.samples * j.m2.samples, q.L, check=False)
    return float(np.max(np.abs(deviation[mask])))


def psi_from_jost(j: JostColumns, q: Potential) -> Tuple[ComplexGrid, ComplexGrid, Tuple[float, float]]:
    """
    Recombine psi_r = m1 - e(z,-k) conj(m2), psi_i = m1 + e(z,-k) conj(m2) and
    report the L2 residuals of their dbar equations on interior nodes.
    """
    spec = q.grid.spec
    chi, _ = localizing_cutoff(spec)
    mask = interior_mask(spec)
    phase = e_phase(spec.nodes(), -j.k)
    correction = phase * np.conj(j.m2.samples)
    psi_r = j.m1.samples - correction
    psi_i = j.m1.samples + correction
    residuals = []
    for psi, s in ((psi_r, 1), (psi_i, -1)):
        res = dbar_derivative(chi * (psi - 1.0), q.L) + s * q.samples * phase * np.conj(psi)
        residuals.append(grid_norm(res, 2, q.h, mask))
    return j.m1.with_samples(psi_r), j.m1.with_samples(psi_i), (residuals[0], residuals[1])


def psi_at(pair: PsiPair, points) -> Tuple[np.ndarray, np.ndarray]:
    """psi_r and psi_i at interior off-grid points."""
    spec = pair.psi_r.spec
    return (
        interpolate_localized(pair.psi_r.samples, spec, points),
        interpolate_localized(pair.psi_i.samples, spec, points),
    )


def reflect_conjugate(samples: np.ndarray) -> np.ndarray:
    """f(z) -> conj(f(conj z)) on the grid; node j along y maps to -j mod nx."""
    nx = samples.shape[1]
    return np.conj(samples[:, (-np.arange(nx)) % nx])


def reflect_conjugate_potential(q: Potential) -> Potential:
    return q.with_samples(reflect_conjugate(q.samples))


def psi_decay_profile(q: Potential, radii: Sequence[float], direction: complex = 1.0,
                      ring_radius: float = 1.0,
                      settings: SolverSettings = DEFAULT_SETTINGS) -> List[Dict[str, float]]:
    """max |psi_r - 1| over the ring |z| ~ ring_radius for k = radius * direction."""
    spec = q.grid.spec
    radius = np.abs(spec.nodes())
    ring = np.abs(radius - ring_radius) <= spec.h
    direction = direction / abs(direction)
    profile = []
    for r in radii:
        psi = solve_psi(q, r * direction, 1, settings)
        profile.append({'k_modulus': float(r), 'max_deviation': float(np.max(np.abs(psi.samples[ring] - 1.0)))})
    return profile
