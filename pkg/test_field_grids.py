"""
Tests for the grid layer: layouts, Cauchy transforms, spectral derivatives,
norms and off-grid evaluation.
"""

import numpy as np
import pytest

from src.models.grids import ComplexGrid, GridSpec, Potential
from src.services.field_grids import (
    cauchy_array,
    cauchy_transform,
    cauchy_transform_at,
    check_edge_support,
    d_derivative,
    dbar_derivative,
    e_phase,
    grid_norm,
    interior_mask,
    interpolate_localized,
    localizing_cutoff,
    radial_cauchy_closed_form,
    relative_error,
    spectral_interpolate,
)
from src.utils.errors import PreconditionError, SupportError

SIGMA = 0.25


def gaussian(z, center=0j, width=SIGMA):
    return np.exp(-np.abs(z - center) ** 2 / width ** 2)


def gaussian_radial_integral(r, width=SIGMA):
    return 0.5 * width ** 2 * (1.0 - np.exp(-r ** 2 / width ** 2))


def disk_errors(nx, radius=1.0, L=2.0):
    spec = GridSpec(nx, L)
    z = spec.nodes()
    inside = np.abs(z) <= radius
    transformed = cauchy_array(inside.astype(complex), L)
    with np.errstate(divide='ignore', invalid='ignore'):
        exact = np.where(inside, np.conj(z), radius ** 2 / z)
    error = np.abs(transformed - exact)
    away = np.abs(np.abs(z) - radius) > 2 * spec.h
    return spec.h, float(np.max(error)), float(np.max(error[away]))


class TestGridLayout:
    def test_node_convention(self):
        spec = GridSpec(8, 2.0)
        z = spec.nodes()
        assert spec.h == 0.5
        assert z[0, 0] == complex(-2.0, -2.0)
        assert z[1, 0] == complex(-1.5, -2.0)
        assert z[0, 1] == complex(-2.0, -1.5)
        assert spec.index_of(0j) == (4, 4)

    @pytest.mark.parametrize('nx', [6, 12, 4])
    def test_rejects_bad_sizes(self, nx):
        with pytest.raises(PreconditionError):
            GridSpec(nx, 1.0)

    def test_samples_are_read_only(self):
        grid = ComplexGrid.zeros(8, 1.0)
        with pytest.raises(ValueError):
            grid.samples[0, 0] = 1.0

    def test_potential_masks_outside_support(self):
        grid = ComplexGrid.from_function(32, 2.0, lambda z: np.ones_like(z))
        q = Potential(grid, 1.0)
        radius = np.abs(q.nodes())
        assert np.all(q.samples[radius > 1.0] == 0)
        assert np.all(q.samples[radius <= 1.0] == 1)

    def test_potential_rejects_wide_support(self):
        with pytest.raises(SupportError):
            Potential(ComplexGrid.zeros(32, 1.0), 0.9)


class TestCauchyTransform:
    def test_gaussian_matches_radial_closed_form(self):
        spec = GridSpec(128, 2.0)
        z = spec.nodes()
        computed = cauchy_transform(ComplexGrid(128, 2.0, gaussian(z))).samples
        exact = radial_cauchy_closed_form(z, gaussian_radial_integral)
        assert np.max(np.abs(computed - exact)) < 1e-8

    def test_disk_indicator_error_within_three_steps(self):
        h, _, away = disk_errors(256)
        assert away <= 3 * h

    def test_disk_indicator_error_decreases_with_refinement(self):
        _, coarse, _ = disk_errors(128)
        _, fine, _ = disk_errors(256)
        assert coarse / fine >= 1.5

    def test_dbar_inverts_cauchy_on_interior(self):
        spec = GridSpec(128, 2.0)
        z = spec.nodes()
        f = gaussian(z, center=0.1 + 0.2j)
        chi, _ = localizing_cutoff(spec)
        recovered = dbar_derivative(chi * cauchy_array(f, 2.0), 2.0)
        mask = interior_mask(spec)
        assert np.max(np.abs(recovered - f)[mask]) < 1e-6

    def test_rejects_data_on_edge_ring(self):
        with pytest.raises(SupportError):
            cauchy_transform(ComplexGrid.from_function(32, 2.0, lambda z: np.ones_like(z)))

    def test_zero_data_passes_edge_check(self):
        check_edge_support(np.zeros((16, 16)))

    def test_off_grid_matches_closed_form_outside_support(self):
        spec = GridSpec(128, 2.0)
        f = gaussian(spec.nodes())
        points = np.array([1.51, 1.2j, -1.03 - 0.97j, 1.37 + 0.4j])
        computed = cauchy_transform_at(f, points, 2.0)
        exact = radial_cauchy_closed_form(points, gaussian_radial_integral)
        assert np.max(np.abs(computed - exact)) < 1e-8


class TestDerivativesAndNorms:
    def test_derivatives_of_gaussian(self):
        spec = GridSpec(128, 2.0)
        z = spec.nodes()
        g = gaussian(z)
        # dbar exp(-z zbar / s^2) = -z / s^2 * g, d of it = -zbar / s^2 * g
        assert np.max(np.abs(dbar_derivative(g, 2.0) + z / SIGMA ** 2 * g)) < 1e-8
        assert np.max(np.abs(d_derivative(g, 2.0) + np.conj(z) / SIGMA ** 2 * g)) < 1e-8

    def test_grid_derivative_keeps_layout(self):
        grid = ComplexGrid.from_function(32, 2.0, gaussian)
        assert dbar_derivative(grid).same_layout(grid)

    def test_norms(self):
        f = np.ones((8, 8))
        assert grid_norm(f, 2, 0.5) == pytest.approx(4.0)
        assert grid_norm(f, 1, 0.5) == pytest.approx(16.0)
        assert grid_norm(3 * f, np.inf) == 3.0

    def test_relative_error(self):
        f = gaussian(GridSpec(32, 2.0).nodes())
        assert relative_error(2 * f, f, 2, 0.125) == pytest.approx(1.0)
        assert relative_error(f, f, 2, 0.125) == 0.0
        # Zero reference falls back to the absolute error.
        assert relative_error(np.zeros_like(f), np.zeros_like(f)) == 0.0

    def test_e_phase_is_unimodular(self):
        z = GridSpec(16, 2.0).nodes()
        assert np.allclose(np.abs(e_phase(z, 1.3 - 0.7j)), 1.0)
        assert np.allclose(e_phase(z, 0.4j) * e_phase(z, -0.4j), 1.0)


class TestOffGridEvaluation:
    def test_spectral_interpolation_of_gaussian(self):
        spec = GridSpec(64, 2.0)
        points = np.array([0.013 + 0.021j, -0.31 + 0.17j, 0.5 - 0.4j])
        values = spectral_interpolate(gaussian(spec.nodes()), points, 2.0)
        assert np.max(np.abs(values - gaussian(points))) < 1e-8

    def test_localized_interpolation_keeps_offset(self):
        spec = GridSpec(128, 2.0)
        points = np.array([0.3 + 0.1j, -0.5j])
        values = interpolate_localized(1.0 + gaussian(spec.nodes()), spec, points)
        assert np.max(np.abs(values - 1.0 - gaussian(points))) < 1e-8

    def test_localized_interpolation_rejects_far_points(self):
        spec = GridSpec(64, 2.0)
        with pytest.raises(PreconditionError):
            interpolate_localized(np.ones((64, 64)), spec, [1.9])

    def test_cutoff_needs_room(self):
        with pytest.raises(PreconditionError):
            localizing_cutoff(GridSpec(8, 1.0))
