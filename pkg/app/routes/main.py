"""
Main routes - Health check and configuration defaults
"""
from datetime import datetime

from flask import Blueprint, jsonify

from config import Config

main_bp = Blueprint('main', __name__)

VERSION = '1.0.0'


@main_bp.route('/health')
def health():
    """Health check endpoint"""
    return jsonify({
        'status': 'healthy',
        'version': VERSION,
        'timestamp': datetime.now().isoformat()
    })


@main_bp.route('/api/defaults', methods=['GET'])
def get_defaults():
    """Environment-derived defaults applied to keys a scenario leaves out"""
    return jsonify({
        'lambda01': Config.DEFAULT_LAMBDA01,
        'lambda11': Config.DEFAULT_LAMBDA11,
        'ybar1': Config.DEFAULT_YBAR1,
        'ybar2': Config.DEFAULT_YBAR2,
        'step': Config.DEFAULT_STEP,
        'horizon': Config.DEFAULT_HORIZON,
        'sweep_workers': Config.SWEEP_WORKERS,
        'report_cache_ttl': Config.REPORT_CACHE_TTL,
    })
