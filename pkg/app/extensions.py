"""
Flask extensions, logging setup and the report cache
"""
import logging

from flask import jsonify
from werkzeug.exceptions import HTTPException

from config import Config

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# Cache for synthesis reports, keyed by scenario fingerprint
report_cache = {}

_logging_configured = False


def init_logging(level=None):
    """Configure the root handler once; later calls only change the level"""
    global _logging_configured
    level = (level or Config.LOG_LEVEL).upper()
    root = logging.getLogger()
    if not _logging_configured:
        logging.basicConfig(format=LOG_FORMAT)
        _logging_configured = True
    root.setLevel(getattr(logging, level, logging.INFO))


def init_extensions(app):
    """Initialize logging and JSON error handlers"""
    init_logging(app.config.get('LOG_LEVEL'))

    @app.errorhandler(HTTPException)
    def handle_http_error(e):
        return jsonify({'error': e.description}), e.code
