"""
Tests for phantoms, configuration, GRID files, the pipeline and the CLI.
"""

import json
import os

import numpy as np
import pytest

from src.cli import build_parser, main, resolve_config
from src.models.config import Phantom, RunConfig, build_phantom, load_run_config
from src.models.grids import ComplexGrid, GridSpec, Potential
from src.models.scattering import ScatteringTransform
from src.services.boundary_dtn import assemble_dtn
from src.services.dbar_forward import k_grid, scattering_grid
from src.services.dbar_inverse import reconstruct_q
from src.services.phantoms import make_phantom
from src.services.pipeline import compare, report_without_timings, run_pipeline, trace_diagnostics
from src.utils.errors import (ConfigValidationError, HeaderMismatchError, PipelineStageError,
                              PreconditionError, SupportError)
from src.utils.grid_io import read_grid, read_sidecar, write_grid
from src.utils.reporting import stable
from src.utils.run_config_validator import RunConfigValidator

SIGMA = 0.25


def write_gaussian(path, nx=128, L=2.0, center=0j):
    grid = ComplexGrid.from_function(nx, L, lambda z: np.exp(-np.abs(z - center) ** 2 / SIGMA ** 2))
    return write_grid(str(path), grid)


class TestPhantoms:
    def test_zero_amplitude(self):
        assert make_phantom(Phantom(amplitude=0.0), 64, 2.0).is_zero()

    def test_peak_value(self):
        field = make_phantom(Phantom(amplitude=1.0, widths=[0.2]), 64, 2.0)
        assert np.max(field.b1) == pytest.approx(1.0)
        assert np.max(field.b2) == pytest.approx(0.5)

    def test_two_blob_is_sum_of_single_blobs(self):
        centers = [(-0.2, 0.1), (0.25, -0.15)]
        both = make_phantom(Phantom(kind='two-blob', centers=centers, widths=[0.15, 0.2]), 64, 2.0)
        first = make_phantom(Phantom(centers=[centers[0]], widths=[0.15]), 64, 2.0)
        second = make_phantom(Phantom(centers=[centers[1]], widths=[0.2]), 64, 2.0)
        assert np.allclose(both.b1, first.b1 + second.b1)
        assert np.allclose(both.b2, first.b2 - second.b2)

    def test_support_is_bounded(self):
        with pytest.raises(SupportError):
            make_phantom(Phantom(support_radius=0.9), 64, 2.0)

    def test_vanishes_outside_support(self):
        field = make_phantom(Phantom(amplitude=1.0, widths=[0.6]), 64, 2.0)
        outside = np.abs(field.b.nodes()) >= 0.8
        assert not np.any(field.b1[outside])

    @pytest.mark.parametrize('values', [
        {'widths': [-0.1]},
        {'kind': 'two-blob'},
        {'kind': 'ring'},
        {'colour': 'red'},
    ])
    def test_invalid_phantoms(self, values):
        with pytest.raises(ConfigValidationError):
            build_phantom(values)

    def test_identifier_is_stable(self):
        assert Phantom(amplitude=0.2).identifier == Phantom(amplitude=0.2).identifier
        assert Phantom(amplitude=0.2).identifier != Phantom(amplitude=0.3).identifier
        assert Phantom().identifier.startswith('gauss-')


class TestRunConfig:
    def test_precedence(self, tmp_path):
        path = tmp_path / 'cfg.json'
        path.write_text(json.dumps({'nx': 64, 'workers': 2, 'phantom': {'amplitude': 0.1}}))
        cfg, phantom = load_run_config(str(path), environ={'DBAR_WORKERS': '3'})
        assert (cfg.nx, cfg.workers) == (64, 3)
        assert phantom.amplitude == 0.1
        cfg, _ = load_run_config(str(path), {'workers': 4, 'nx': None}, environ={'DBAR_WORKERS': '3'})
        assert (cfg.nx, cfg.workers) == (64, 4)

    def test_invalid_values_are_collected(self):
        with pytest.raises(ConfigValidationError) as info:
            load_run_config(overrides={'nx': 100, 'boundary_nodes': 65}, environ={})
        assert len(info.value.errors) == 2
        assert info.value.exit_code == 2

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigValidationError):
            load_run_config(str(tmp_path / 'missing.json'), environ={})

    def test_hash_ignores_workers_and_output(self):
        assert RunConfig(workers=4, output_dir='elsewhere').config_hash() == RunConfig().config_hash()
        assert RunConfig(K=6.0).config_hash() != RunConfig().config_hash()

    def test_derived_defaults(self):
        cfg = RunConfig(K=4.0, modes=16)
        assert cfg.effective_k_half_width == 5.0
        assert cfg.effective_theta_nodes == 64


class TestRunConfigValidator:
    def test_defaults_are_valid(self):
        results = RunConfigValidator(RunConfig(), Phantom()).validate_all()
        assert results['valid']
        assert results['errors'] == []
        assert results['warnings'] == []

    def test_domain_must_contain_disk(self):
        results = RunConfigValidator(RunConfig(L=1.0)).validate_all()
        assert any('L = 1' in e for e in results['errors'])

    def test_truncation_must_fit_k_grid(self):
        results = RunConfigValidator(RunConfig(K=8.0, k_half_width=8.0)).validate_all()
        assert any('0.8 x k half-width' in e for e in results['errors'])

    def test_nyquist(self):
        coarse = RunConfigValidator(RunConfig(nx=16, K=8.0)).validate_all()
        assert any('Nyquist' in e for e in coarse['errors'])
        medium = RunConfigValidator(RunConfig(nx=32, K=8.0)).validate_all()
        assert any('Nyquist' in w for w in medium['warnings'])

    def test_boundary_resolution(self):
        results = RunConfigValidator(RunConfig(modes=40, theta_nodes=64, series_n=40)).validate_all()
        assert any('theta_nodes' in e for e in results['errors'])
        assert any('series_n' in e for e in results['errors'])

    def test_phantom_warnings(self):
        results = RunConfigValidator(RunConfig(nx=32), Phantom(amplitude=0.0, widths=[0.2])).validate_all()
        assert any('amplitude is 0' in w for w in results['warnings'])
        assert any('grid steps' in w for w in results['warnings'])

    def test_setup_guide_lists_issues(self):
        validator = RunConfigValidator(RunConfig(L=1.0))
        validator.validate_all()
        guide = validator.generate_setup_guide()
        assert '## ❌ Critical Issues (Must Fix)' in guide
        assert '## Configuration Template' in guide


class TestGridFiles:
    def test_round_trip(self, tmp_path):
        grid = ComplexGrid.from_function(32, 1.5, lambda z: z ** 2 + 1j)
        path = write_grid(str(tmp_path / 'a.grid'), grid, {'K': 3.0})
        loaded = read_grid(path)
        assert loaded.same_layout(grid)
        assert np.array_equal(loaded.samples, grid.samples)
        assert read_sidecar(path) == {'K': 3.0}

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / 'junk.grid'
        path.write_bytes(b'NOPE' + bytes(32))
        with pytest.raises(PreconditionError):
            read_grid(str(path))

    def test_missing_sidecar_is_empty(self, tmp_path):
        path = write_gaussian(tmp_path / 'g.grid', nx=16)
        assert read_sidecar(path) == {}


class TestCompare:
    def test_identical_and_zero(self, tmp_path):
        a = write_gaussian(tmp_path / 'a.grid')
        zero = write_grid(str(tmp_path / 'zero.grid'), ComplexGrid.zeros(128, 2.0))
        assert compare(a, a) == 0.0
        assert compare(a, zero) == pytest.approx(1.0)

    @pytest.mark.parametrize('shift', [0.05, 0.25])
    def test_shifted_gaussian(self, tmp_path, shift):
        a = write_gaussian(tmp_path / 'a.grid')
        b = write_gaussian(tmp_path / 'b.grid', center=shift)
        exact = np.sqrt(2.0 * (1.0 - np.exp(-shift ** 2 / (2.0 * SIGMA ** 2))))
        assert compare(a, b) == pytest.approx(exact, rel=1e-8)

    def test_header_mismatch(self, tmp_path):
        a = write_gaussian(tmp_path / 'a.grid')
        b = write_gaussian(tmp_path / 'b.grid', nx=64)
        with pytest.raises(HeaderMismatchError):
            compare(a, b)

    def test_unknown_norm(self, tmp_path):
        a = write_gaussian(tmp_path / 'a.grid', nx=16)
        with pytest.raises(PreconditionError):
            compare(a, a, 'l3')


class TestReporting:
    def test_stable_rounding(self):
        value = stable({'x': 1.0 / 3.0, 'c': 1 + 2j, 'a': np.array([0.1]), 'n': np.int64(3), 'f': np.bool_(True)})
        assert value == {'x': 0.333333333333, 'c': {'re': 1.0, 'im': 2.0}, 'a': [0.1], 'n': 3, 'f': True}


class TestPipeline:
    def test_volume_pipeline_on_zero_phantom(self, small_config):
        report = run_pipeline(small_config, Phantom(amplitude=0.0), volume_only=True)
        assert report['errors'] == {'b1': 0.0, 'b2': 0.0, 'q': 0.0}
        assert report['mode'] == 'volume'
        assert os.path.exists(os.path.join(small_config.output_dir, 'report.json'))
        with open(os.path.join(small_config.output_dir, 'pipeline.log')) as f:
            assert 'Phantom amplitude is 0' in f.read()

    def test_full_pipeline_on_zero_phantom(self, small_config):
        cfg = small_config.model_copy(update={'K': 2.0, 'kmax': 2.0})
        report = run_pipeline(cfg, Phantom(amplitude=0.0))
        assert max(report['errors'].values()) <= 1e-6
        assert set(report['artifacts']) >= {'dtn.json', 'einvb.csv', 't.grid', 'q_hat.grid', 'b1_hat.grid'}
        assert len(report['diagnostics']['trace_checks']) == 3
        sidecar = read_sidecar(os.path.join(cfg.output_dir, 'q_hat.grid'))
        assert sidecar['config_hash'] == cfg.config_hash()

    def test_trace_checks_follow_the_seed(self, small_config, zero_field_64):
        cfg = small_config.model_copy(update={'K': 2.0})
        dtn = assemble_dtn(zero_field_64, 16, 24)
        kspec = k_grid(cfg.kgrid_n, cfg.effective_k_half_width)
        first = trace_diagnostics(dtn, kspec, cfg)
        again = trace_diagnostics(dtn, kspec, cfg)
        other = trace_diagnostics(dtn, kspec, cfg.model_copy(update={'seed': 1}))
        assert [c['k'] for c in first] == [c['k'] for c in again]
        assert [c['k'] for c in first] != [c['k'] for c in other]
        for check in first + other:
            assert abs(check['k']) <= cfg.K
            assert check['residual_hilbert'] < 1e-3

    def test_report_is_independent_of_workers(self, small_config, tmp_path):
        spec = Phantom(amplitude=0.2)
        serial = run_pipeline(small_config, spec, volume_only=True)
        threaded_cfg = small_config.model_copy(update={'workers': 3, 'output_dir': str(tmp_path / 'threaded')})
        threaded = run_pipeline(threaded_cfg, spec, volume_only=True)
        assert report_without_timings(serial) == report_without_timings(threaded)
        assert serial['errors']['b1'] > 0

    def test_failing_stage_is_named_and_replayable(self, small_config):
        with pytest.raises(PipelineStageError) as info:
            run_pipeline(small_config, Phantom(support_radius=0.9), volume_only=True)
        assert info.value.stage == 'validate'
        assert info.value.exit_code == 2
        replay = info.value.details['replay_file']
        with open(replay) as f:
            assert json.load(f)['phantom']['support_radius'] == 0.9

    def test_invalid_config_stops_before_phantom(self, small_config):
        cfg = small_config.model_copy(update={'K': 8.0, 'k_half_width': 8.0})
        with pytest.raises(PipelineStageError) as info:
            run_pipeline(cfg, Phantom(), volume_only=True)
        assert info.value.stage == 'validate'
        assert not os.path.exists(os.path.join(cfg.output_dir, 'b1.grid'))

    @pytest.mark.slow
    def test_calibrated_phantom_is_recovered(self, tmp_path):
        report = run_pipeline(RunConfig(output_dir=str(tmp_path / 'calibrated'), workers=4), Phantom())
        assert report['errors']['b1'] <= 0.10
        assert report['errors']['b2'] <= 0.10


class TestCli:
    def test_phantom_command(self, tmp_path, capsys):
        out = str(tmp_path / 'cli')
        assert main(['phantom', '--output-dir', out, '--nx', '64', '--amplitude', '0.2']) == 0
        result = json.loads(capsys.readouterr().out)
        assert result['max_abs_b1'] == pytest.approx(0.2)
        assert os.path.exists(os.path.join(out, 'q.grid'))
        assert os.path.exists(os.path.join(out, 'phantom_report.json'))

    def test_precondition_failure_exits_with_two(self, tmp_path, capsys):
        out = str(tmp_path / 'cli')
        assert main(['phantom', '--output-dir', out, '--support-radius', '0.9']) == 2
        err = capsys.readouterr().err
        error = json.loads(err[err.rindex('\n{\n') + 1:])
        assert error['error'] == 'SupportError'

    def test_compare_header_mismatch(self, tmp_path):
        a = write_gaussian(tmp_path / 'a.grid')
        b = write_gaussian(tmp_path / 'b.grid', nx=64)
        assert main(['compare', a, b, '--output-dir', str(tmp_path / 'cli')]) == 2

    def test_validate_writes_guide(self, tmp_path):
        guide = tmp_path / 'guide.md'
        code = main(['validate', '--output-dir', str(tmp_path / 'cli'), '--K', '8', '--k-half-width', '8',
                     '--guide', str(guide)])
        assert code == 2
        assert 'Critical Issues' in guide.read_text()

    def test_unwrap_from_phantom_files(self, tmp_path, capsys):
        out = str(tmp_path / 'cli')
        assert main(['phantom', '--output-dir', out, '--nx', '64']) == 0
        capsys.readouterr()
        assert main(['unwrap', '--q', os.path.join(out, 'q.grid'), '--output-dir', out, '--nx', '64']) == 0
        assert compare(os.path.join(out, 'b1.grid'), os.path.join(out, 'b1_hat.grid')) < 1e-3

    def test_restart_and_seed_flags_reach_the_config(self):
        cfg, _ = resolve_config(build_parser().parse_args(['validate', '--restart', '7', '--seed', '3']))
        assert (cfg.restart, cfg.seed) == (7, 3)

    def test_scatter_and_invert_from_grid_files(self, tmp_path, capsys):
        out = str(tmp_path / 'cli')
        assert main(['phantom', '--output-dir', out, '--nx', '64']) == 0
        q_path = os.path.join(out, 'q.grid')
        assert main(['scatter', '--q', q_path, '--output-dir', out, '--nx', '64', '--K', '3',
                     '--kgrid-n', '16', '--k-half-width', '5']) == 0
        t_path = os.path.join(out, 't.grid')
        assert read_sidecar(t_path)['K'] == 3.0
        settings = RunConfig().solver_settings()
        q = Potential(read_grid(q_path), read_sidecar(q_path)['support_radius'])
        t = scattering_grid(q, k_grid(16, 5.0), 3.0, settings)
        assert np.allclose(read_grid(t_path).samples, t.samples, rtol=0, atol=1e-10)

        assert main(['invert', '--t', t_path, '--output-dir', out, '--nx', '32', '--radius', '0.5']) == 0
        capsys.readouterr()
        q_hat = reconstruct_q(ScatteringTransform(read_grid(t_path), 3.0), GridSpec(32, 2.0), 0.5, settings)
        assert np.allclose(read_grid(os.path.join(out, 'q_hat.grid')).samples, q_hat.samples, rtol=0, atol=1e-10)

    def test_boundary_scatter_from_dtn_file(self, tmp_path, capsys):
        out = str(tmp_path / 'cli')
        assert main(['forward-dtn', '--output-dir', out, '--nx', '64', '--amplitude', '0',
                     '--modes', '16', '--radial-degree', '24']) == 0
        capsys.readouterr()
        assert main(['scatter', '--dtn', os.path.join(out, 'dtn.json'), '--output-dir', out,
                     '--K', '2', '--kmax', '2', '--kgrid-n', '16', '--k-half-width', '2.5',
                     '--series-n', '8', '--boundary-nodes', '64', '--directions', '4']) == 0
        result = json.loads(capsys.readouterr().out)
        assert result['source'] == 'boundary'
        assert result['max_abs_t'] < 1e-6
        assert os.path.exists(os.path.join(out, 'einvb.csv'))
