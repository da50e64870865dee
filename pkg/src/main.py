import logging
import os

from flask import Flask, jsonify
from flask_cors import CORS

from src.routes.pipeline_routes import pipeline_bp
from src.utils.errors import DbarError
from src.utils.logging_setup import setup_logging

logger = logging.getLogger(__name__)


def create_app(output_dir=None) -> Flask:
    app = Flask(__name__)
    CORS(app)
    app.config['DBAR_OUTPUT_DIR'] = output_dir or os.environ.get('DBAR_OUTPUT_DIR', 'dbar_output')
    app.register_blueprint(pipeline_bp)

    @app.errorhandler(DbarError)
    def handle_dbar_error(error):
        logger.error(f"Request failed: {error.message}")
        body = {'success': False, 'message': error.message}
        body.update(error.to_dict())
        return jsonify(body), error.http_status

    @app.errorhandler(404)
    def not_found(error):
        return jsonify({'success': False, 'message': 'Endpoint not found'}), 404

    return app


setup_logging(os.environ.get('DBAR_LOG_FILE'))
app = create_app()
