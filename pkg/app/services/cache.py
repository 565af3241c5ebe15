"""In-memory result cache for the HTTP surface."""

from __future__ import annotations

import hashlib
import json
import logging
from typing import Any, Optional

from cachetools import TTLCache

from app.config import get_settings

logger = logging.getLogger(__name__)
settings = get_settings()

# 256 results; grids and contour sets can be large
_memory_cache: TTLCache = TTLCache(maxsize=256, ttl=settings.cache_ttl)


def cache_key(prefix: str, payload: Any) -> str:
    """Stable key from a prefix and a JSON-serializable request payload."""
    data = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    h = hashlib.sha256(data.encode()).hexdigest()[:24]
    return f"coast:{prefix}:{h}"


def get_cached(prefix: str, payload: Any) -> Optional[dict[str, Any]]:
    return _memory_cache.get(cache_key(prefix, payload))


def set_cached(prefix: str, payload: Any, value: dict[str, Any]) -> None:
    _memory_cache[cache_key(prefix, payload)] = value


def clear_cache() -> None:
    _memory_cache.clear()
    logger.debug("Result cache cleared")


def cache_size() -> int:
    return len(_memory_cache)
