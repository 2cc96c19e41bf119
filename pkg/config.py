"""
Configuration management for DDMR Delay Lab
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Config:
    """Application configuration"""

    # Flask configuration
    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key-change-in-production')
    FLASK_ENV = os.getenv('FLASK_ENV', 'development')
    API_HOST = os.getenv('API_HOST', '127.0.0.1')
    API_PORT = int(os.getenv('API_PORT', '5000'))

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

    # Report cache configuration
    REPORT_CACHE_TTL = int(os.getenv('REPORT_CACHE_TTL', '300'))  # seconds

    # Linear-velocity channel of the preinstalled controller (critically damped)
    DEFAULT_LAMBDA01 = float(os.getenv('DEFAULT_LAMBDA01', '100.0'))  # 1/s^2
    DEFAULT_LAMBDA11 = float(os.getenv('DEFAULT_LAMBDA11', '20.0'))  # 1/s

    # Operating point
    DEFAULT_YBAR1 = float(os.getenv('DEFAULT_YBAR1', '0.5'))  # m/s
    DEFAULT_YBAR2 = float(os.getenv('DEFAULT_YBAR2', '0.5'))  # rad

    # Integration settings
    DEFAULT_STEP = float(os.getenv('DEFAULT_STEP', '1e-4'))  # s
    DEFAULT_HORIZON = float(os.getenv('DEFAULT_HORIZON', '1.5'))  # s
    STATE_GUARD = float(os.getenv('STATE_GUARD', '1e12'))

    # Sweeps
    SWEEP_WORKERS = int(os.getenv('SWEEP_WORKERS', '1'))

    # Output
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'out')
