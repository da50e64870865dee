"""
Command-line interface: ``dbar <subcommand> [--config cfg.json] [flags]``.

Each stage of the reconstruction can be run on its own from files written by
the previous stage. Flags override the config file, which overrides the
defaults. Exit status: 0 success, 2 precondition error, 3 solver failure.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.models.boundary import BoundaryFunction, DtNOperator
from src.models.config import Phantom, RunConfig, build_phantom, load_run_config
from src.models.convection import ConvectionField
from src.models.grids import GridSpec, Potential
from src.models.scattering import ScatteringTransform
from src.services.boundary_dtn import (assemble_dtn, boundary_scattering_grid, einvb_limit,
                                       recover_traces)
from src.services.convection_link import phase_unwrap, q_from_b
from src.services.dbar_forward import k_grid, scattering_grid
from src.services.dbar_inverse import reconstruct_q
from src.services.phantoms import make_phantom
from src.services.pipeline import compare, load_scattering_metadata, run_pipeline
from src.utils.errors import DbarError, PreconditionError
from src.utils.grid_io import read_grid, read_sidecar, write_grid
from src.utils.logging_setup import setup_logging
from src.utils.reporting import stable, write_json
from src.utils.run_config_validator import RunConfigValidator

logger = logging.getLogger(__name__)

# flag destination -> RunConfig field
CONFIG_FLAGS = {
    'nx': 'nx', 'L': 'L', 'K': 'K', 'kgrid_n': 'kgrid_n', 'k_half_width': 'k_half_width',
    'modes': 'modes', 'radial_degree': 'radial_degree', 'theta_nodes': 'theta_nodes',
    'boundary_nodes': 'boundary_nodes', 'series_n': 'series_n', 'reg': 'reg', 'kmax': 'kmax',
    'directions': 'directions', 'tol': 'solver_tol', 'max_iterations': 'max_iterations',
    'restart': 'restart', 'unwrap_tau': 'unwrap_tau', 'support_margin': 'support_margin', 'seed': 'seed',
    'workers': 'workers', 'output_dir': 'output_dir',
}

PHANTOM_FLAGS = {
    'kind': 'kind', 'amplitude': 'amplitude', 'b2_ratio': 'b2_ratio',
    'width': 'widths', 'center': 'centers', 'support_radius': 'support_radius',
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='RunConfig JSON file (may hold a "phantom" object)')
    common.add_argument('--output-dir', dest='output_dir', help='Directory for artifacts')
    common.add_argument('--workers', type=int, help='Parallel solves per stage')
    common.add_argument('--nx', type=int, help='z-grid nodes per axis (power of two)')
    common.add_argument('--L', type=float, help='z-grid half-width')
    common.add_argument('--K', type=float, help='k truncation radius')
    common.add_argument('--kgrid-n', dest='kgrid_n', type=int, help='k-grid nodes per axis')
    common.add_argument('--k-half-width', dest='k_half_width', type=float, help='k-grid half-width')
    common.add_argument('--modes', type=int, help='Fourier modes of the DtN map')
    common.add_argument('--radial-degree', dest='radial_degree', type=int, help='Chebyshev degree of the disk solver')
    common.add_argument('--theta-nodes', dest='theta_nodes', type=int, help='Angular nodes of the disk solver')
    common.add_argument('--boundary-nodes', dest='boundary_nodes', type=int, help='Nodes of boundary functions')
    common.add_argument('--series-n', dest='series_n', type=int, help='Trace series order N')
    common.add_argument('--reg', type=float, help='Ridge weight of the trace fit')
    common.add_argument('--kmax', type=float, help='|k| at which exp(-C b) is read off')
    common.add_argument('--directions', type=int, help='Directions averaged at |k| = kmax')
    common.add_argument('--tol', type=float, help='Krylov relative tolerance')
    common.add_argument('--max-iterations', dest='max_iterations', type=int, help='Krylov iteration cap')
    common.add_argument('--restart', type=int, help='GMRES restart length')
    common.add_argument('--unwrap-tau', dest='unwrap_tau', type=float, help='Relative |v| floor in phase unwrapping')
    common.add_argument('--support-margin', dest='support_margin', type=float, help='Margin added to the support when inverting')
    common.add_argument('--seed', type=int, help='Seed choosing the k nodes of the trace diagnostics')
    common.add_argument('--kind', choices=['gauss', 'bump', 'two-blob'], help='Phantom kind')
    common.add_argument('--amplitude', type=float, help='Phantom amplitude')
    common.add_argument('--b2-ratio', dest='b2_ratio', type=float, help='Ratio of b2 to b1')
    common.add_argument('--width', type=float, action='append', help='Phantom width (repeat for two-blob)')
    common.add_argument('--center', type=_parse_pair, action='append', help='Phantom center x,y (repeat for two-blob)')
    common.add_argument('--support-radius', dest='support_radius', type=float, help='Phantom support radius')
    common.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    common.add_argument('--log-file', dest='log_file', help='Also log to this file')
    return common


def _parse_pair(text: str):
    try:
        x, y = (float(part) for part in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}")
    return (x, y)


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(' ', '').replace('i', 'j'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a complex number such as 1.5+0.5j, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog='dbar', description='D-bar reconstruction of convection coefficients')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('phantom', parents=[common], help='Write b1, b2 and q grids of a phantom')

    p = sub.add_parser('forward-dtn', parents=[common], help='Assemble the DtN map of a phantom')
    p.add_argument('--b1', help='GRID file with b1 (otherwise the phantom is generated)')
    p.add_argument('--b2', help='GRID file with b2')

    p = sub.add_parser('traces', parents=[common], help='Recover h_r, h_i at one k from a DtN map')
    p.add_argument('--dtn', required=True, help='DtN JSON file')
    p.add_argument('--k', type=_parse_complex, required=True, help='Spectral parameter, e.g. 1.5+0.5j')

    p = sub.add_parser('scatter', parents=[common], help='Tabulate t(k) from q (volume) or from a DtN map')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--q', help='GRID file with q')
    source.add_argument('--dtn', help='DtN JSON file')
    p.add_argument('--einvb', help='CSV with exp(-C b) on the circle (computed when missing)')

    p = sub.add_parser('invert', parents=[common], help='Reconstruct q from t(k)')
    p.add_argument('--t', required=True, help='GRID file with t')
    p.add_argument('--radius', type=float, help='Reconstruction radius (default: support + margin)')

    p = sub.add_parser('unwrap', parents=[common], help='Recover b1, b2 from q')
    p.add_argument('--q', required=True, help='GRID file with q')

    sub.add_parser('roundtrip-volume', parents=[common], help='Phantom -> q -> t -> q -> b without the boundary')
    sub.add_parser('pipeline', parents=[common], help='Full reconstruction from the DtN map')

    p = sub.add_parser('compare', parents=[common], help='Relative difference of two GRID files')
    p.add_argument('a', help='Reference GRID file')
    p.add_argument('b', help='GRID file to compare')
    p.add_argument('--norm', choices=['l1', 'l2', 'linf'], default='l2')

    p = sub.add_parser('validate', parents=[common], help='Check a configuration before running')
    p.add_argument('--guide', help='Write a markdown setup guide here')
    return parser


def resolve_config(args: argparse.Namespace) -> Tuple[RunConfig, Phantom]:
    """RunConfig and Phantom from the config file with flag overrides applied."""
    overrides = {field: getattr(args, flag, None) for flag, field in CONFIG_FLAGS.items()}
    config, phantom = load_run_config(args.config, overrides)
    values = phantom.model_dump() if phantom is not None else {}
    values.update({field: getattr(args, flag) for flag, field in PHANTOM_FLAGS.items()
                   if getattr(args, flag, None) is not None})
    return config, build_phantom(values)


def _meta(cfg: RunConfig, **extra: Any) -> Dict[str, Any]:
    meta = {'config_hash': cfg.config_hash()}
    meta.update(extra)
    return meta


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _read_potential(path: str, default_radius: float) -> Potential:
    grid = read_grid(path)
    radius = read_sidecar(path).get('support_radius', default_radius)
    return Potential(grid, radius)


def cmd_phantom(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    field = make_phantom(spec, cfg.nx, cfg.L)
    q = q_from_b(field)
    meta = _meta(cfg, phantom_id=spec.identifier, support_radius=spec.support_radius)
    files = {
        'b1': write_grid(_out(cfg, 'b1.grid'), q.grid.with_samples(field.b1), meta),
        'b2': write_grid(_out(cfg, 'b2.grid'), q.grid.with_samples(field.b2), meta),
        'q': write_grid(_out(cfg, 'q.grid'), q.grid, meta),
    }
    return {
        'phantom_id': spec.identifier,
        'max_abs_b1': float(np.max(np.abs(field.b1))),
        'max_abs_b2': float(np.max(np.abs(field.b2))),
        'max_abs_q': float(np.max(np.abs(q.samples))),
        'files': files,
    }


def _field_for(args, cfg: RunConfig, spec: Phantom) -> ConvectionField:
    if args.b1 or args.b2:
        if not (args.b1 and args.b2):
            raise PreconditionError("--b1 and --b2 must be given together")
        b1 = read_grid(args.b1)
        b2 = read_grid(args.b2)
        if not b1.same_layout(b2):
            raise PreconditionError("b1 and b2 grids differ in layout")
        meta = read_sidecar(args.b1)
        return ConvectionField(b1.samples.real, b2.samples.real, b1.L,
                               meta.get('support_radius', spec.support_radius), meta.get('phantom_id'))
    return make_phantom(spec, cfg.nx, cfg.L)


def cmd_forward_dtn(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    field = _field_for(args, cfg, spec)
    dtn = assemble_dtn(field, cfg.modes, cfg.radial_degree, cfg.effective_theta_nodes)
    path = write_json(_out(cfg, 'dtn.json'), dtn.to_dict())
    return {'phantom_id': dtn.phantom_id, 'modes': dtn.modes, 'file': path}


def cmd_traces(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    dtn = DtNOperator.from_json(args.dtn)
    h_r, h_i, report = recover_traces(dtn, args.k, cfg.series_n, cfg.reg, cfg.boundary_nodes)
    h_r.to_csv(_out(cfg, 'h_r.csv'))
    h_i.to_csv(_out(cfg, 'h_i.csv'))
    payload = {'k': args.k, 'report': report.to_dict(), 'config_hash': cfg.config_hash()}
    write_json(_out(cfg, 'traces.json'), payload)
    return payload


def cmd_scatter(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    kspec = k_grid(cfg.kgrid_n, cfg.effective_k_half_width)
    settings = cfg.solver_settings()
    if args.q:
        q = _read_potential(args.q, spec.support_radius)
        t = scattering_grid(q, kspec, cfg.K, settings)
        source = 'volume'
    else:
        dtn = DtNOperator.from_json(args.dtn)
        if args.einvb:
            einvb = BoundaryFunction.from_csv(args.einvb)
        else:
            einvb = einvb_limit(dtn, cfg.kmax, cfg.directions, cfg.series_n, cfg.reg, cfg.boundary_nodes)
            einvb.to_csv(_out(cfg, 'einvb.csv'))
        t = boundary_scattering_grid(dtn, einvb, kspec, cfg.K, cfg.series_n, cfg.reg, settings)
        source = 'boundary'
    path = write_grid(_out(cfg, 't.grid'), t.grid, _meta(cfg, source=source, **t.metadata()))
    return {'source': source, 'max_abs_t': float(np.max(np.abs(t.samples))), 'file': path}


def cmd_invert(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    grid = read_grid(args.t)
    t = ScatteringTransform(grid, load_scattering_metadata(args.t, cfg.K))
    radius = args.radius if args.radius is not None else min(spec.support_radius + cfg.support_margin, 0.8 * cfg.L)
    q_hat = reconstruct_q(t, GridSpec(cfg.nx, cfg.L), radius, cfg.solver_settings())
    path = write_grid(_out(cfg, 'q_hat.grid'), q_hat.grid, _meta(cfg, support_radius=radius))
    return {'radius': radius, 'max_abs_q': float(np.max(np.abs(q_hat.samples))), 'file': path}


def cmd_unwrap(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    q = _read_potential(args.q, spec.support_radius)
    result = phase_unwrap(q, cfg.unwrap_tau, cfg.solver_settings())
    field = result.field
    meta = _meta(cfg, support_radius=q.support_radius)
    return {
        'below_threshold': result.below_threshold,
        'min_abs_v': result.min_abs_v,
        'files': {
            'b1': write_grid(_out(cfg, 'b1_hat.grid'), q.grid.with_samples(field.b1), meta),
            'b2': write_grid(_out(cfg, 'b2_hat.grid'), q.grid.with_samples(field.b2), meta),
        },
    }


def cmd_roundtrip_volume(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    return run_pipeline(cfg, spec, volume_only=True)


def cmd_pipeline(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    return run_pipeline(cfg, spec)


def cmd_compare(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    return {'a': args.a, 'b': args.b, 'norm': args.norm, 'relative_error': compare(args.a, args.b, args.norm)}


def cmd_validate(args, cfg: RunConfig, spec: Phantom) -> Dict[str, Any]:
    validator = RunConfigValidator(cfg, spec)
    results = validator.validate_all()
    if args.guide:
        with open(args.guide, 'w') as f:
            f.write(validator.generate_setup_guide())
        results['guide'] = args.guide
    if not results['valid']:
        raise PreconditionError(f"Configuration invalid: {results['summary']}", errors=results['errors'])
    return results


# These write their own report.json.
SELF_REPORTING = {'pipeline', 'roundtrip-volume'}

COMMANDS = {
    'phantom': cmd_phantom,
    'forward-dtn': cmd_forward_dtn,
    'traces': cmd_traces,
    'scatter': cmd_scatter,
    'invert': cmd_invert,
    'unwrap': cmd_unwrap,
    'roundtrip-volume': cmd_roundtrip_volume,
    'pipeline': cmd_pipeline,
    'compare': cmd_compare,
    'validate': cmd_validate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file, logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg, spec = resolve_config(args)
        logger.info(f"dbar {args.command} (config {cfg.config_hash()[:12]})")
        result = COMMANDS[args.command](args, cfg, spec)
    except DbarError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(json.dumps(e.to_dict(), indent=2, sort_keys=True), file=sys.stderr)
        return e.exit_code
    if args.command not in SELF_REPORTING:
        write_json(_out(cfg, f"{args.command}_report.json"), result)
    print(json.dumps(stable(result), indent=2, sort_keys=True))
    return 0


if __name__ == '__main__':
    sys.exit(main())
