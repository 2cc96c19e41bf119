"""
Cache management utilities
"""
import logging
from datetime import datetime

from config import Config
from app.extensions import report_cache

logger = logging.getLogger(__name__)


def get_cached_or_compute(cache_key, compute_function, ttl=None):
    """
    Get a report from cache or compute it if expired

    Args:
        cache_key: Key to identify cached data (scenario fingerprint)
        compute_function: Function to call if the entry is missing or expired
        ttl: Lifetime in seconds, Config.REPORT_CACHE_TTL if None

    Returns:
        Cached or freshly computed data
    """
    ttl = Config.REPORT_CACHE_TTL if ttl is None else ttl
    now = datetime.now()
    cached = report_cache.get(cache_key)

    if cached and cached['data'] is not None and cached['timestamp'] is not None:
        age = (now - cached['timestamp']).total_seconds()
        if age < ttl:
            logger.debug(f"Cache hit for {cache_key[:12]}")
            return cached['data']

    data = compute_function()
    report_cache[cache_key] = {'data': data, 'timestamp': now}
    return data
