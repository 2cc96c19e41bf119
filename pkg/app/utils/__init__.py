"""
Utility functions for DDMR Delay Lab
"""
from .cache import get_cached_or_compute
from .decorators import json_errors

__all__ = [
    'get_cached_or_compute',
    'json_errors',
]
