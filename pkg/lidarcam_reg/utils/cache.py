"""
On-disk cache for benchmark sample results
Samples with identical parameters are not recomputed
"""

import hashlib
import json
import logging
import os
import shutil
from datetime import datetime, timedelta
from typing import Any, Dict, Optional

from ..geometry.formats import write_text_atomic

logger = logging.getLogger(__name__)


class ResultCache:
    """JSON results keyed by the MD5 of their parameters"""

    def __init__(self, cache_dir: str, max_age_days: Optional[int] = None):
        """
        Initialize cache

        Args:
            cache_dir: Directory for cache storage
            max_age_days: Maximum age for cached entries (None = never expire)
        """
        self.cache_dir = str(cache_dir)
        self.max_age = timedelta(days=max_age_days) if max_age_days is not None else None
        self._ensure_cache_dir()

    def _ensure_cache_dir(self):
        os.makedirs(os.path.join(self.cache_dir, 'results'), exist_ok=True)

    @staticmethod
    def cache_key(params: Dict[str, Any]) -> str:
        """MD5 of the parameters serialized with sorted keys"""
        param_str = json.dumps(params, sort_keys=True, default=str)
        return hashlib.md5(param_str.encode()).hexdigest()

    def _result_path(self, cache_key: str) -> str:
        return os.path.join(self.cache_dir, 'results', f"{cache_key}.json")

    def get_cached(self, params: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """
        Retrieve a cached result

        Returns:
            The stored result dict, or None when missing, expired or unreadable
        """
        cache_key = self.cache_key(params)
        path = self._result_path(cache_key)
        if not os.path.exists(path):
            return None
        try:
            with open(path, 'r') as f:
                entry = json.load(f)
            if self.max_age is not None:
                age = datetime.now() - datetime.fromisoformat(entry['timestamp'])
                if age > self.max_age:
                    logger.info("⚠️ Cache expired (age: %d days)", age.days)
                    return None
            if entry.get('params') != json.loads(json.dumps(params, sort_keys=True, default=str)):
                logger.warning("⚠️ Cache key collision on %s, ignoring entry", cache_key[:8])
                return None
            logger.debug("✓ Cache hit: %s", cache_key[:8])
            return entry['result']
        except (OSError, ValueError, KeyError) as e:
            logger.warning("⚠️ Cache read error: %s", e)
            return None

    def save_to_cache(self, params: Dict[str, Any], result: Dict[str, Any]) -> None:
        cache_key = self.cache_key(params)
        entry = {
            'timestamp': datetime.now().isoformat(),
            'params': json.loads(json.dumps(params, sort_keys=True, default=str)),
            'result': result,
            'cache_key': cache_key,
        }
        try:
            write_text_atomic(self._result_path(cache_key), json.dumps(entry, indent=2, sort_keys=True))
            logger.debug("✓ Cached: %s", cache_key[:8])
        except OSError as e:
            logger.warning("⚠️ Cache write error: %s", e)

    def clear_cache(self) -> None:
        shutil.rmtree(self.cache_dir, ignore_errors=True)
        self._ensure_cache_dir()
        logger.info("✓ Cache cleared")

    def get_cache_stats(self) -> Dict[str, Any]:
        results_dir = os.path.join(self.cache_dir, 'results')
        files = os.listdir(results_dir)
        total_size = sum(os.path.getsize(os.path.join(results_dir, f)) for f in files)
        return {
            'num_entries': len(files),
            'total_size_mb': round(total_size / (1024 * 1024), 2),
            'cache_dir': self.cache_dir,
        }
