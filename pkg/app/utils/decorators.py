"""
Custom decorators for the application
"""
import logging
from functools import wraps

from flask import jsonify

from app.exceptions import DelayLabError

logger = logging.getLogger(__name__)


def json_errors(f):
    """Map library errors to JSON responses: bad input 400, anything else 500"""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValueError as e:
            return jsonify({'error': str(e), 'type': type(e).__name__}), 400
        except DelayLabError as e:
            logger.error(f"✗ {type(e).__name__}: {e}")
            return jsonify({'error': str(e), 'type': type(e).__name__}), 500
        except Exception as e:
            logger.exception(f"✗ Unexpected error: {e}")
            return jsonify({'error': str(e)}), 500
    return decorated_function
