"""
k-plane dbar problem and reconstruction of the potential.

For fixed z the normalized solutions phi = exp(-izk) Phi solve

    dbar_k phi = sign * t(k) e(z, -k) conj(phi),    phi -> 1,

with sign = -1 for phi_r and +1 for phi_i, so phi_r = m1 - m2 and
phi_i = m1 + m2. This is the physical-space equation with the roles of z and k
swapped and reuses the same solver. The potential is recovered by

    q(z) = -(i/pi) int e(z,k) conj(t(k)) (phi_r + phi_i)/2 dmu(k).
"""

import logging
from typing import Dict, List, Sequence

import numpy as np

from src.models.config import SolverSettings
from src.models.grids import ComplexGrid, GridSpec, Potential
from src.models.scattering import PhiPair, PsiPair, ScatteringTransform
from src.services.dbar_forward import DEFAULT_SETTINGS, psi_at, solve_dbar_system
from src.services.field_grids import e_phase, interpolate_localized
from src.utils.errors import PreconditionError
from src.utils.krylov import KrylovResult
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)


def _solve_phi(t: ScatteringTransform, z: complex, sign: int,
               settings: SolverSettings) -> KrylovResult:
    if sign not in (1, -1):
        raise PreconditionError(f"sign must be +1 or -1, got {sign}", sign=sign)
    a = t.samples * e_phase(z, -t.grid.nodes())
    return solve_dbar_system(a, t.grid.L, -sign, settings)


def solve_phi(t: ScatteringTransform, z: complex, sign: int,
              settings: SolverSettings = DEFAULT_SETTINGS) -> ComplexGrid:
    """phi_r (sign=-1) or phi_i (sign=+1) on the k-grid of ``t``."""
    return t.grid.with_samples(1.0 + _solve_phi(t, z, sign, settings).solution)


def solve_phi_pair(t: ScatteringTransform, z: complex,
                   settings: SolverSettings = DEFAULT_SETTINGS) -> PhiPair:
    r = _solve_phi(t, z, -1, settings)
    i = _solve_phi(t, z, 1, settings)
    return PhiPair(
        phi_r=t.grid.with_samples(1.0 + r.solution),
        phi_i=t.grid.with_samples(1.0 + i.solution),
        z=complex(z),
        residual=max(r.residual, i.residual),
        iterations=r.iterations + i.iterations,
    )


def potential_from_pair(t: ScatteringTransform, pair: PhiPair) -> complex:
    mask = np.abs(t.grid.nodes()) <= t.K
    k = t.grid.nodes()[mask]
    mean_phi = 0.5 * (pair.phi_r.samples + pair.phi_i.samples)[mask]
    integrand = e_phase(pair.z, k) * np.conj(t.samples[mask]) * mean_phi
    return complex(-1j / np.pi * t.grid.h ** 2 * np.sum(integrand))


def reconstruct_q(t: ScatteringTransform, zspec: GridSpec, radius: float,
                  settings: SolverSettings = DEFAULT_SETTINGS) -> Potential:
    """
    Evaluate q on the nodes of ``zspec`` with |z| <= radius; zero elsewhere.

    Each node needs its own pair of k-plane solves; they run in parallel and
    are merged in row-major order.
    """
    znodes = zspec.nodes()
    indices = list(zip(*np.nonzero(np.abs(znodes) <= radius)))
    values = np.zeros((zspec.nx, zspec.nx), dtype=complex)

    if np.any(t.samples):
        logger.info(f"Reconstructing q at {len(indices)} z nodes from a {t.grid.nx}^2 k-grid")

        def one(z):
            return potential_from_pair(t, solve_phi_pair(t, z, settings))

        results = ordered_map(one, [complex(znodes[idx]) for idx in indices],
                              workers=settings.workers, label='z')
        for idx, value in zip(indices, results):
            values[idx] = value

    return Potential(ComplexGrid(zspec.nx, zspec.L, values), radius)


def phi_at(pair: PhiPair, points):
    spec = pair.phi_r.spec
    return (
        interpolate_localized(pair.phi_r.samples, spec, points),
        interpolate_localized(pair.phi_i.samples, spec, points),
    )


def identity_deviations(psi: PsiPair, phi: PhiPair) -> Dict[str, float]:
    """Deviation of every Psi/Phi identity at the common point (phi.z, psi.k)."""
    z0 = phi.z
    k0 = psi.k
    psi_r, psi_i = psi_at(psi, z0)
    phi_r, phi_i = phi_at(phi, k0)
    growth = np.exp(1j * z0 * k0)
    Psi_r = complex(growth * psi_r[0])
    Psi_i = complex(1j * growth * psi_i[0])
    Phi_r = complex(growth * phi_r[0])
    Phi_i = complex(1j * growth * phi_i[0])
    return {
        're_phi_i': abs(Phi_i.real + Psi_r.imag),
        're_phi_r': abs(Phi_r.real - Psi_r.real),
        'im_phi_i': abs(Phi_i.imag - Psi_i.imag),
        'im_phi_r': abs(Phi_r.imag + Psi_i.real),
        'combination': abs((Phi_r - 1j * Phi_i) - (Psi_r - 1j * Psi_i)),
    }


def identities_check(psi: PsiPair, phi: PhiPair) -> float:
    """Max deviation over the four real identities and Phi_r - i Phi_i = Psi_r - i Psi_i."""
    return max(identity_deviations(psi, phi).values())


def phi_combination_decay(t: ScatteringTransform, z: complex, radii: Sequence[float],
                          settings: SolverSettings = DEFAULT_SETTINGS) -> List[Dict[str, float]]:
    """max |(Phi_r - i Phi_i) e^{-izk} - 2| = max |phi_r + phi_i - 2| on circles |k| ~ radius."""
    pair = solve_phi_pair(t, z, settings)
    modulus = np.abs(t.grid.nodes())
    deviation = np.abs(pair.phi_r.samples + pair.phi_i.samples - 2.0)
    profile = []
    for r in radii:
        ring = np.abs(modulus - r) <= t.grid.h
        profile.append({'k_modulus': float(r), 'max_deviation': float(np.max(deviation[ring]))})
    return profile
