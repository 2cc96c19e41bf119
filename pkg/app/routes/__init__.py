"""
Route blueprints for DDMR Delay Lab
"""
from .main import main_bp
from .synthesis import synthesis_bp
from .simulation import simulation_bp

__all__ = [
    'main_bp',
    'synthesis_bp',
    'simulation_bp',
]
