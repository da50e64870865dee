"""Smooth, compactly supported convection phantoms."""

import logging

import numpy as np

from src.models.config import MAX_PHANTOM_SUPPORT, Phantom
from src.models.convection import ConvectionField
from src.models.grids import SUPPORT_MARGIN, GridSpec
from src.utils.errors import SupportError

logger = logging.getLogger(__name__)

# The taper is identically 1 inside TAPER_START * support_radius.
TAPER_START = 0.75


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for s <= 0, 0 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        left = np.where(s < 1.0, np.exp(-1.0 / np.where(s < 1.0, 1.0 - s, 1.0)), 0.0)
        right = np.where(s > 0.0, np.exp(-1.0 / np.where(s > 0.0, s, 1.0)), 0.0)
    return left / (left + right)


def taper(radius: np.ndarray, support_radius: float) -> np.ndarray:
    start = TAPER_START * support_radius
    return _smooth_step((radius - start) / (support_radius - start))


def _gauss(z: np.ndarray, center: complex, width: float) -> np.ndarray:
    return np.exp(-np.abs(z - center) ** 2 / width ** 2)


def _bump(z: np.ndarray, center: complex, width: float) -> np.ndarray:
    rho2 = np.abs(z - center) ** 2 / width ** 2
    inside = rho2 < 1.0
    with np.errstate(divide='ignore'):
        values = np.exp(1.0 - 1.0 / np.where(inside, 1.0 - rho2, 1.0))
    return np.where(inside, values, 0.0)


def phantom_parts(spec: Phantom, z: np.ndarray):
    """Untapered profiles, one per blob."""
    centers = [complex(x, y) for x, y in spec.centers]
    if spec.kind == 'gauss':
        return [_gauss(z, centers[0], spec.widths[0])]
    if spec.kind == 'bump':
        return [_bump(z, centers[0], spec.widths[0])]
    return [_gauss(z, centers[j], spec.widths[j]) for j in range(2)]


def make_phantom(spec: Phantom, nx: int, L: float) -> ConvectionField:
    """
    b1 = amplitude * sum(parts) and b2 = b2_ratio * amplitude * sum((-1)^j part_j),
    each multiplied by a smooth taper vanishing outside ``support_radius``.
    """
    limit = min(MAX_PHANTOM_SUPPORT, (1.0 - SUPPORT_MARGIN) * L)
    if spec.support_radius > limit + 1e-12:
        raise SupportError(
            f"phantom support radius {spec.support_radius:g} exceeds {limit:g}",
            support_radius=spec.support_radius, limit=limit,
        )
    grid = GridSpec(nx, L)
    z = grid.nodes()
    window = taper(np.abs(z), spec.support_radius)
    parts = [spec.amplitude * part * window for part in phantom_parts(spec, z)]
    b1 = np.sum(parts, axis=0)
    b2 = spec.b2_ratio * np.sum([(-1) ** j * part for j, part in enumerate(parts)], axis=0)
    logger.debug(f"phantom {spec.kind}: max|b1|={np.max(np.abs(b1)):.4f}, max|b2|={np.max(np.abs(b2)):.4f}")
    return ConvectionField(b1, b2, L, spec.support_radius, spec.identifier)
