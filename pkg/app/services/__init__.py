"""
Business logic services for DDMR Delay Lab
"""
from .runner import RunnerService

__all__ = [
    'RunnerService',
]
