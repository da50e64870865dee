"""
HTTP endpoints for configuring and running reconstructions.
"""

import logging

import numpy as np
from flask import Blueprint, current_app, jsonify, request

from src.models.config import RunConfig, build_phantom, load_run_config
from src.services.convection_link import q_from_b
from src.services.phantoms import make_phantom
from src.services.pipeline import run_pipeline
from src.utils.errors import ConfigValidationError, PreconditionError
from src.utils.reporting import stable
from src.utils.run_config_validator import RunConfigValidator

logger = logging.getLogger(__name__)

pipeline_bp = Blueprint('pipeline', __name__, url_prefix='/api')


def _payload() -> dict:
    data = request.get_json(silent=True)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise PreconditionError("request body must be a JSON object")
    return data


def _config_and_phantom(data: dict):
    """
    RunConfig from ``data['config']`` and Phantom from ``data['phantom']``.

    Artifacts always go to the app's output directory; requests cannot name one.
    """
    overrides = data.get('config') or {}
    if not isinstance(overrides, dict):
        raise PreconditionError("'config' must be a JSON object")
    if 'output_dir' in overrides:
        raise ConfigValidationError(
            "output_dir is fixed by the server and cannot be set in a request",
            ['config.output_dir: not accepted over HTTP'],
        )
    overrides = dict(overrides, output_dir=current_app.config['DBAR_OUTPUT_DIR'])
    config, _ = load_run_config(overrides=overrides, environ={})
    return config, build_phantom(data.get('phantom'))


@pipeline_bp.route('/health', methods=['GET'])
def health_check():
    return jsonify({
        'status': 'healthy',
        'message': 'D-bar reconstruction service is running'
    })


@pipeline_bp.route('/config/defaults', methods=['GET'])
def config_defaults():
    return jsonify({
        'success': True,
        'config': RunConfig().model_dump(mode='json'),
        'phantom': build_phantom(None).model_dump(mode='json'),
    })


@pipeline_bp.route('/config/validate', methods=['POST'])
def validate_config():
    config, phantom = _config_and_phantom(_payload())
    validator = RunConfigValidator(config, phantom)
    results = validator.validate_all()
    return jsonify({
        'success': results['valid'],
        'message': results['summary'],
        'config_hash': config.config_hash(),
        'results': results,
    })


@pipeline_bp.route('/phantom', methods=['POST'])
def phantom_summary():
    data = _payload()
    config, phantom = _config_and_phantom(data)
    field = make_phantom(phantom, config.nx, config.L)
    q = q_from_b(field)
    body = {
        'success': True,
        'phantom_id': phantom.identifier,
        'nx': config.nx,
        'L': config.L,
        'max_abs_b1': float(np.max(np.abs(field.b1))),
        'max_abs_b2': float(np.max(np.abs(field.b2))),
        'max_abs_q': float(np.max(np.abs(q.samples))),
    }
    if data.get('include_samples'):
        body['b1'] = field.b1
        body['b2'] = field.b2
    return jsonify(stable(body))


@pipeline_bp.route('/pipeline/run', methods=['POST'])
def pipeline_run():
    data = _payload()
    config, phantom = _config_and_phantom(data)
    volume_only = bool(data.get('volume_only', False))
    logger.info(f"Pipeline requested for phantom {phantom.identifier} (volume_only={volume_only})")
    report = run_pipeline(config, phantom, volume_only=volume_only)
    return jsonify({
        'success': True,
        'message': 'Reconstruction finished',
        'report': report,
    })
