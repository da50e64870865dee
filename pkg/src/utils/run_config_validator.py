"""
Run Configuration Validator

Checks a RunConfig (and optional Phantom) against the discretization limits
of the solvers before any expensive stage starts, and renders a setup guide
for the issues found.
"""

import logging
from typing import Any, Dict, List, Optional

import numpy as np

from src.models.config import MAX_PHANTOM_SUPPORT, Phantom, RunConfig
from src.models.grids import SUPPORT_MARGIN, GridSpec
from src.services.field_grids import localizing_cutoff
from src.utils.errors import PreconditionError

logger = logging.getLogger(__name__)

# Smallest phantom width, in grid steps, that the spectral derivatives resolve.
MIN_WIDTH_STEPS = 3.0


class RunConfigValidator:
    """Validates solver and phantom parameters for one run."""

    def __init__(self, config: RunConfig, phantom: Optional[Phantom] = None):
        self.config = config
        self.phantom = phantom
        self.errors: List[str] = []
        self.warnings: List[str] = []
        self.info: List[str] = []

    def validate_all(self) -> Dict[str, Any]:
        """Run every check and return the collected results."""
        self.errors, self.warnings, self.info = [], [], []

        self._validate_domain()
        self._validate_k_grid()
        self._validate_boundary()
        self._validate_cutoff()
        if self.phantom is not None:
            self._validate_phantom()

        valid = not self.errors
        logger.info(f"Run config validation: {len(self.errors)} errors, {len(self.warnings)} warnings")
        return {
            'valid': valid,
            'errors': list(self.errors),
            'warnings': list(self.warnings),
            'info': list(self.info),
            'summary': f"{len(self.errors)} errors, {len(self.warnings)} warnings, {len(self.info)} checks passed",
        }

    def _validate_domain(self):
        cfg = self.config
        if cfg.L <= 1.0:
            self.errors.append(f"L = {cfg.L:g} must exceed 1 so the unit disk lies inside the grid")
        else:
            self.info.append(f"Grid: nx = {cfg.nx}, L = {cfg.L:g}, h = {2 * cfg.L / cfg.nx:.4g}")

    def _validate_k_grid(self):
        cfg = self.config
        half_width = cfg.effective_k_half_width
        if cfg.K > 0.8 * half_width + 1e-12:
            self.errors.append(
                f"K = {cfg.K:g} exceeds 0.8 x k half-width ({half_width:g}); "
                f"the truncated transform would touch the k-grid edge"
            )
        else:
            self.info.append(f"k-grid: {cfg.kgrid_n} nodes on [-{half_width:g}, {half_width:g}]^2, K = {cfg.K:g}")

        h = 2 * cfg.L / cfg.nx
        nyquist = np.pi / h
        if 2 * cfg.K >= nyquist:
            self.errors.append(
                f"exp(i(zk + conj(zk))) oscillates with frequency 2K = {2 * cfg.K:g}, "
                f"above the z-grid Nyquist limit {nyquist:.4g}; increase nx or lower K"
            )
        elif 2 * cfg.K > 0.5 * nyquist:
            self.warnings.append(
                f"2K = {2 * cfg.K:g} is more than half the z-grid Nyquist limit {nyquist:.4g}"
            )
        else:
            self.info.append(f"2K = {2 * cfg.K:g} well below the Nyquist limit {nyquist:.4g}")

        if cfg.kmax < cfg.K:
            self.warnings.append(f"kmax = {cfg.kmax:g} is below K = {cfg.K:g}; the einvb limit is taken at small |k|")

    def _validate_boundary(self):
        cfg = self.config
        needed = 2 * cfg.modes + 1
        if cfg.effective_theta_nodes <= needed:
            self.errors.append(
                f"theta_nodes = {cfg.effective_theta_nodes} must exceed 2 x modes + 1 = {needed}"
            )
        else:
            self.info.append(f"DtN: {cfg.modes} modes on {cfg.effective_theta_nodes} angular nodes")

        if cfg.boundary_nodes < needed:
            self.errors.append(f"boundary_nodes = {cfg.boundary_nodes} must be at least 2 x modes + 1 = {needed}")
        else:
            self.info.append(f"Boundary functions sampled on {cfg.boundary_nodes} nodes")

        if cfg.series_n > cfg.boundary_nodes // 4:
            self.errors.append(
                f"series_n = {cfg.series_n} exceeds boundary_nodes / 4 = {cfg.boundary_nodes // 4}"
            )
        elif cfg.series_n > cfg.modes:
            self.warnings.append(f"series_n = {cfg.series_n} exceeds modes = {cfg.modes}; high coefficients are unconstrained")
        else:
            self.info.append(f"Trace series truncated at N = {cfg.series_n}, ridge {cfg.reg:g}")

        if cfg.radial_degree % 2 == 0:
            self.info.append(f"radial_degree {cfg.radial_degree} is rounded up to {cfg.radial_degree + 1}")

    def _validate_cutoff(self):
        try:
            _, interior = localizing_cutoff(GridSpec(self.config.nx, self.config.L))
        except PreconditionError as e:
            self.errors.append(f"Localizing cutoff has no interior: {e.message}")
            return
        self.info.append(f"Localizing cutoff interior radius {interior:.3g}")

    def _validate_phantom(self):
        cfg, phantom = self.config, self.phantom
        limit = min(MAX_PHANTOM_SUPPORT, (1.0 - SUPPORT_MARGIN) * cfg.L)
        if phantom.support_radius > limit + 1e-12:
            self.errors.append(f"Phantom support radius {phantom.support_radius:g} exceeds {limit:g}")
        else:
            self.info.append(f"Phantom {phantom.kind} supported in radius {phantom.support_radius:g}")

        h = 2 * cfg.L / cfg.nx
        narrow = [w for w in phantom.widths if w < MIN_WIDTH_STEPS * h]
        if narrow:
            self.warnings.append(
                f"Phantom widths {narrow} are below {MIN_WIDTH_STEPS:g} grid steps ({MIN_WIDTH_STEPS * h:.3g})"
            )

        if phantom.amplitude == 0:
            self.warnings.append("Phantom amplitude is 0; every reconstruction is trivially zero")

    def generate_setup_guide(self) -> str:
        """Markdown guide listing the issues found by ``validate_all``."""
        guide = ["# Reconstruction Run Setup Guide", ""]

        if self.errors:
            guide.extend(["## ❌ Critical Issues (Must Fix)", ""])
            guide.extend(f"{i}. {error}" for i, error in enumerate(self.errors, 1))
            guide.append("")

        if self.warnings:
            guide.extend(["## ⚠️ Warnings (Recommended to Fix)", ""])
            guide.extend(f"{i}. {warning}" for i, warning in enumerate(self.warnings, 1))
            guide.append("")

        if self.info:
            guide.extend(["## ✅ Configured Correctly", ""])
            guide.extend(f"{i}. {item}" for i, item in enumerate(self.info, 1))
            guide.append("")

        guide.extend([
            "## Configuration Template",
            "",
            "```json",
            self.config.model_dump_json(indent=2),
            "```",
            "",
            "## Discretization Checklist",
            "",
            "1. L > 1 and the phantom support within min(0.8, 0.8 L)",
            "2. K at most 0.8 x k half-width and 2K below pi / h",
            "3. theta_nodes above 2 x modes + 1",
            "4. series_n at most boundary_nodes / 4",
            "",
        ])
        return "\n".join(guide)
