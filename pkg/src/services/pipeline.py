"""
End-to-end reconstruction: phantom -> DtN map -> traces -> t(k) -> q -> b.

Every stage writes its artifact (GRID / JSON / CSV plus a ``.meta.json``
sidecar carrying the RunConfig hash) into ``cfg.output_dir``. A failing stage
is reported as ``PipelineStageError`` after the config and phantom needed to
replay it have been written next to the artifacts.
"""

import logging
import os
import time
from contextlib import contextmanager
from typing import Any, Dict, List, Optional

import numpy as np

from src.models.boundary import DtNOperator
from src.models.config import Phantom, RunConfig
from src.models.grids import GridSpec
from src.services.boundary_dtn import assemble_dtn, boundary_scattering_grid, einvb_limit, recover_traces
from src.services.convection_link import phase_unwrap, q_from_b
from src.services.dbar_forward import k_grid, scattering_grid
from src.services.dbar_inverse import reconstruct_q
from src.services.field_grids import grid_norm, relative_error
from src.services.phantoms import make_phantom
from src.utils.errors import (ConfigValidationError, DbarError, HeaderMismatchError, PipelineStageError,
                              PreconditionError)
from src.utils.grid_io import check_same_layout, read_grid, read_sidecar, write_grid, write_sidecar
from src.utils.logging_setup import attach_file_handler
from src.utils.reporting import stable, write_json
from src.utils.run_config_validator import RunConfigValidator

logger = logging.getLogger(__name__)

NORMS = {'l1': 1, 'l2': 2, 'linf': np.inf}

TRACE_SAMPLES = 3


class PipelineRun:
    """State of one pipeline invocation: output paths, timings, artifacts."""

    def __init__(self, cfg: RunConfig, spec: Phantom, mode: str):
        self.cfg = cfg
        self.spec = spec
        self.mode = mode
        self.output_dir = cfg.output_dir
        self.config_hash = cfg.config_hash()
        self.timings: Dict[str, float] = {}
        self.artifacts: Dict[str, str] = {}
        os.makedirs(self.output_dir, exist_ok=True)

    def metadata(self, **extra: Any) -> Dict[str, Any]:
        meta = {'config_hash': self.config_hash, 'phantom_id': self.spec.identifier}
        meta.update(extra)
        return meta

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def save_grid(self, name: str, grid, **extra: Any) -> None:
        self.artifacts[name] = write_grid(self.path(name), grid, self.metadata(**extra))

    def save_json(self, name: str, payload: Dict[str, Any]) -> None:
        self.artifacts[name] = write_json(self.path(name), payload)
        write_sidecar(self.artifacts[name], self.metadata())

    def save_csv(self, name: str, boundary_function) -> None:
        boundary_function.to_csv(self.path(name))
        self.artifacts[name] = self.path(name)
        write_sidecar(self.artifacts[name], self.metadata())

    def write_replay(self, stage: str) -> str:
        return write_json(self.path(f"replay_{stage}.json"), {
            'stage': stage,
            'mode': self.mode,
            'config': self.cfg.model_dump(mode='json'),
            'phantom': self.spec.model_dump(mode='json'),
            'artifacts': dict(self.artifacts),
        })

    @contextmanager
    def stage(self, name: str):
        logger.info(f"Stage '{name}' started")
        start = time.perf_counter()
        try:
            yield
        except DbarError as exc:
            replay = self.write_replay(name)
            logger.error(f"Stage '{name}' failed: {exc.message} (replay inputs in {replay})")
            raise PipelineStageError(name, exc, replay) from exc
        self.timings[name] = time.perf_counter() - start
        logger.info(f"Stage '{name}' finished in {self.timings[name]:.2f}s")


def trace_diagnostics(dtn: DtNOperator, kspec: GridSpec, cfg: RunConfig,
                      samples: int = TRACE_SAMPLES) -> List[Dict[str, Any]]:
    """Trace-fit residuals at ``samples`` nodes with |k| <= K, drawn with ``cfg.seed``."""
    knodes = kspec.nodes()
    candidates = knodes[np.abs(knodes) <= cfg.K]
    rng = np.random.default_rng(cfg.seed)
    picked = np.sort(rng.choice(candidates.size, size=min(samples, candidates.size), replace=False))
    checks = []
    for index in picked:
        k = complex(candidates[index])
        _, _, report = recover_traces(dtn, k, cfg.series_n, cfg.reg, cfg.boundary_nodes)
        checks.append({
            'k': k,
            'residual_hilbert': report.residual_hilbert,
            'residual_exterior': report.residual_exterior,
            'condition': report.condition,
        })
    return checks


def run_pipeline(cfg: RunConfig, spec: Phantom, volume_only: bool = False) -> Dict[str, Any]:
    """
    Run the full reconstruction (or the volume-only variant q -> t -> q -> b)
    and return the JSON report; the report is also written to report.json.
    """
    run = PipelineRun(cfg, spec, 'volume' if volume_only else 'full')
    settings = cfg.solver_settings()
    handler = attach_file_handler(run.path('pipeline.log'))
    logger.info(f"Pipeline ({run.mode}) for phantom {spec.identifier}, config {run.config_hash[:12]}")
    diagnostics: Dict[str, Any] = {}
    try:
        with run.stage('validate'):
            checks = RunConfigValidator(cfg, spec).validate_all()
            for warning in checks['warnings']:
                logger.warning(warning)
            if not checks['valid']:
                raise ConfigValidationError(f"Configuration invalid: {checks['summary']}", checks['errors'])

        with run.stage('phantom'):
            field = make_phantom(spec, cfg.nx, cfg.L)
            q = q_from_b(field)
            run.save_grid('b1.grid', field.b.grid.with_samples(field.b1), support_radius=spec.support_radius)
            run.save_grid('b2.grid', field.b.grid.with_samples(field.b2), support_radius=spec.support_radius)
            run.save_grid('q.grid', q.grid, support_radius=q.support_radius)

        kspec = k_grid(cfg.kgrid_n, cfg.effective_k_half_width)
        if volume_only:
            with run.stage('scatter'):
                t = scattering_grid(q, kspec, cfg.K, settings)
                run.save_grid('t.grid', t.grid, **t.metadata())
        else:
            with run.stage('forward-dtn'):
                dtn = assemble_dtn(field, cfg.modes, cfg.radial_degree, cfg.effective_theta_nodes)
                run.save_json('dtn.json', dtn.to_dict())
            with run.stage('einvb'):
                einvb = einvb_limit(dtn, cfg.kmax, cfg.directions, cfg.series_n, cfg.reg, cfg.boundary_nodes)
                run.save_csv('einvb.csv', einvb)
            with run.stage('traces+scatter'):
                t = boundary_scattering_grid(dtn, einvb, kspec, cfg.K, cfg.series_n, cfg.reg, settings)
                run.save_grid('t.grid', t.grid, **t.metadata())
                diagnostics['trace_checks'] = trace_diagnostics(dtn, kspec, cfg)

        with run.stage('invert'):
            radius = min(spec.support_radius + cfg.support_margin, 0.8 * cfg.L)
            q_hat = reconstruct_q(t, GridSpec(cfg.nx, cfg.L), radius, settings)
            run.save_grid('q_hat.grid', q_hat.grid, support_radius=radius)

        with run.stage('unwrap'):
            unwrapped = phase_unwrap(q_hat, cfg.unwrap_tau, settings)
            b_hat = unwrapped.field
            run.save_grid('b1_hat.grid', q_hat.grid.with_samples(b_hat.b1))
            run.save_grid('b2_hat.grid', q_hat.grid.with_samples(b_hat.b2))
            diagnostics['unwrap_below_threshold'] = unwrapped.below_threshold
            diagnostics['unwrap_min_abs_v'] = unwrapped.min_abs_v

        with run.stage('metrics'):
            h = field.h
            errors = {
                'b1': relative_error(b_hat.b1, field.b1, 2, h),
                'b2': relative_error(b_hat.b2, field.b2, 2, h),
                'q': relative_error(q_hat.samples, q.samples, 2, h),
            }
            diagnostics['t_max_abs'] = grid_norm(t.samples, np.inf)
            diagnostics['t_nodes'] = int(np.count_nonzero(np.abs(kspec.nodes()) <= cfg.K))
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()

    report = {
        'mode': run.mode,
        'config_hash': run.config_hash,
        'config': cfg.numerics(),
        'phantom': spec.model_dump(mode='json'),
        'phantom_id': spec.identifier,
        'errors': errors,
        'diagnostics': diagnostics,
        'timings': run.timings,
        'artifacts': {name: os.path.basename(path) for name, path in run.artifacts.items()},
    }
    write_json(run.path('report.json'), report)
    logger.info(f"Pipeline finished: b1 error {errors['b1']:.3e}, b2 error {errors['b2']:.3e}, q error {errors['q']:.3e}")
    return stable(report)


def compare(path_a: str, path_b: str, norm: str = 'l2') -> float:
    """||a - b|| / ||a|| for two GRID files with identical headers."""
    if norm not in NORMS:
        raise PreconditionError(f"unknown norm {norm!r}; use one of {sorted(NORMS)}", norm=norm)
    check_same_layout(path_a, path_b)
    a = read_grid(path_a)
    b = read_grid(path_b)
    if not a.same_layout(b):
        raise HeaderMismatchError("grid layouts differ")
    return relative_error(b, a, NORMS[norm], a.h)


def report_without_timings(report: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in report.items() if key != 'timings'}


def load_scattering_metadata(path: str, default_K: Optional[float] = None) -> float:
    meta = read_sidecar(path)
    if 'K' in meta:
        return float(meta['K'])
    if default_K is None:
        raise PreconditionError(f"{path} has no K in its sidecar and none was given")
    return float(default_K)
