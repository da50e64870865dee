"""
Tests for the k-plane solutions phi_r, phi_i and the reconstruction of q.
"""

from dataclasses import replace

import numpy as np
import pytest

from conftest import gaussian_potential
from src.models.grids import ComplexGrid, GridSpec
from src.models.scattering import ScatteringTransform
from src.services.dbar_forward import jost_columns, k_grid, scattering_grid, solve_psi_pair
from src.services.dbar_inverse import (
    identities_check,
    identity_deviations,
    phi_at,
    phi_combination_decay,
    reconstruct_q,
    solve_phi,
    solve_phi_pair,
)
from src.services.field_grids import cauchy_array, e_phase, interpolate_localized, relative_error
from src.utils.errors import PreconditionError


def zero_transform(n=16, half_width=5.0, K=3.0):
    return ScatteringTransform(ComplexGrid.zeros(n, half_width), K)


def gaussian_transform(delta, n=16, half_width=5.0, K=3.0):
    return ScatteringTransform(ComplexGrid.from_function(n, half_width, lambda k: delta * np.exp(-np.abs(k) ** 2)), K)


class TestTrivialTransform:
    def test_zero_transform_reconstructs_zero(self):
        q = reconstruct_q(zero_transform(), GridSpec(64, 2.0), 0.9)
        assert not np.any(q.samples)
        assert q.support_radius == 0.9

    def test_phi_is_one_for_zero_transform(self):
        pair = solve_phi_pair(zero_transform(), 0.3 + 0.2j)
        assert np.all(pair.phi_r.samples == 1.0)
        assert np.all(pair.phi_i.samples == 1.0)

    def test_rejects_bad_sign(self):
        with pytest.raises(PreconditionError):
            solve_phi(zero_transform(), 0.1, 2)

    def test_transform_is_truncated(self):
        values = np.ones((16, 16), dtype=complex)
        t = ScatteringTransform(ComplexGrid(16, 5.0, values), 3.0)
        assert np.all(t.samples[np.abs(t.grid.nodes()) > 3.0] == 0)


class TestPhiSolutions:
    def test_combination_decays_in_k(self, q64, settings):
        t = scattering_grid(q64, k_grid(16, 5.0), 3.0, settings)
        profile = phi_combination_decay(t, 0.2 - 0.1j, [0.7, 4.5], settings)
        assert profile[1]['max_deviation'] < profile[0]['max_deviation']

    def test_small_transform_follows_first_born_term(self, settings):
        z0 = 0.2 - 0.1j
        deviations = {}
        for delta in (1e-2, 1e-3):
            t = gaussian_transform(delta)
            first = cauchy_array(t.samples * e_phase(z0, -t.grid.nodes()), t.grid.L, check=False)
            # phi_r - 1 ~ -first, phi_i - 1 ~ +first
            deviations[delta] = max(
                np.max(np.abs(solve_phi(t, z0, sign, settings).samples - 1.0 - sign * first))
                for sign in (-1, 1)
            ) / np.max(np.abs(first))
        assert deviations[1e-3] < 1e-2
        assert deviations[1e-3] <= 0.2 * deviations[1e-2]

    def test_parallel_reconstruction_is_bit_identical(self, q64, settings):
        t = scattering_grid(q64, k_grid(16, 5.0), 3.0, settings)
        serial = reconstruct_q(t, GridSpec(32, 2.0), 0.5, settings)
        threaded = reconstruct_q(t, GridSpec(32, 2.0), 0.5, replace(settings, workers=3))
        assert np.array_equal(serial.samples, threaded.samples)

    def test_reconstruction_is_linear_for_small_potentials(self, settings):
        kspec = k_grid(16, 5.0)
        zspec = GridSpec(32, 2.0)

        def normalized(delta):
            t = scattering_grid(gaussian_potential(64, amplitude=delta), kspec, 3.0, settings)
            return reconstruct_q(t, zspec, 0.5, settings).samples / delta

        born_line = normalized(1e-3)
        deviation = {delta: relative_error(normalized(delta), born_line) for delta in (0.1, 0.01)}
        assert deviation[0.1] > 0
        assert deviation[0.01] <= 0.2 * deviation[0.1]


@pytest.mark.slow
class TestReconstruction:
    def test_psi_phi_identities(self, volume_transform_03, settings):
        q, t = volume_transform_03
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(5):
            z = 0.5 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
            k = 1.4 * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
            psi = solve_psi_pair(q, complex(k), settings)
            phi = solve_phi_pair(t, complex(z), settings)
            worst = max(worst, identities_check(psi, phi))
        assert worst <= 1e-4

    def test_identity_report_names_every_relation(self, volume_transform_03, settings):
        q, t = volume_transform_03
        deviations = identity_deviations(solve_psi_pair(q, 0.5 + 0.5j, settings),
                                         solve_phi_pair(t, 0.1 - 0.2j, settings))
        assert set(deviations) == {'re_phi_i', 're_phi_r', 'im_phi_i', 'im_phi_r', 'combination'}

    def test_phi_matches_jost_combinations(self, volume_transform_03, settings):
        q, t = volume_transform_03
        z0, k0 = 0.3 - 0.2j, 0.9 + 0.6j
        j = jost_columns(solve_psi_pair(q, k0, settings))
        m1 = interpolate_localized(j.m1.samples, q.grid.spec, [z0])[0]
        m2 = interpolate_localized(j.m2.samples, q.grid.spec, [z0], offset=0.0)[0]
        phi_r, phi_i = phi_at(solve_phi_pair(t, z0, settings), [k0])
        assert abs(phi_r[0] - (m1 - m2)) <= 1e-4 * abs(m1 - m2)
        assert abs(phi_i[0] - (m1 + m2)) <= 1e-4 * abs(m1 + m2)

    def test_round_trip_recovers_potential(self, volume_transform_05, settings):
        q, t = volume_transform_05
        q_hat = reconstruct_q(t, GridSpec(128, 2.0), 0.9, settings)
        assert relative_error(q_hat.samples, q.samples, 2, q.h) <= 0.05

    def test_larger_truncation_radius_reduces_error(self, volume_transform_05, settings):
        _, t = volume_transform_05
        q = gaussian_potential(64, amplitude=0.5)
        errors = []
        for K in (4.0, 8.0):
            q_hat = reconstruct_q(ScatteringTransform(t.grid, K), GridSpec(64, 2.0), 0.9, settings)
            errors.append(relative_error(q_hat.samples, q.samples, 2, q.h))
        assert errors[1] <= errors[0]
