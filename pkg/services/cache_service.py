"""
DMBN Toolkit - Cache Service
In-process memoisation of kernel factorisations. Gram matrices depend only on
the time grid, the smoothness parameter and the jitter, and the sampler asks
for the same handful of them thousands of times.
"""

import hashlib
from collections import OrderedDict
from functools import wraps
from threading import Lock
from typing import Any, Callable, Dict, List, Optional
import fnmatch
import logging

import numpy as np

logger = logging.getLogger(__name__)


class MemoryCache:
    """Thread-safe in-memory LRU cache"""

    def __init__(self, max_size: int = 128):
        self.max_size = max_size
        self._cache: "OrderedDict[str, Any]" = OrderedDict()
        self._lock = Lock()

    def get(self, key: str) -> Optional[Any]:
        """Get value from cache"""
        with self._lock:
            if key not in self._cache:
                return None
            self._cache.move_to_end(key)
            return self._cache[key]

    def set(self, key: str, value: Any) -> None:
        """Set value in cache, evicting the least recently used entry when full"""
        with self._lock:
            self._cache[key] = value
            self._cache.move_to_end(key)
            while len(self._cache) > self.max_size:
                self._cache.popitem(last=False)

    def delete(self, key: str) -> bool:
        """Delete key from cache"""
        with self._lock:
            return self._cache.pop(key, None) is not None

    def clear(self) -> None:
        """Clear all cache entries"""
        with self._lock:
            self._cache.clear()

    def keys(self, pattern: Optional[str] = None) -> List[str]:
        """Get all keys, optionally filtered by a glob pattern"""
        with self._lock:
            if pattern is None:
                return list(self._cache.keys())
            return [key for key in self._cache.keys() if fnmatch.fnmatch(key, pattern)]

    def size(self) -> int:
        with self._lock:
            return len(self._cache)


class CacheService:
    """Memory cache with hit statistics and array-aware key generation"""

    def __init__(self, max_size: int = 128):
        self.memory_cache = MemoryCache(max_size=max_size)
        self._hits = 0
        self._misses = 0
        self._sets = 0

    @staticmethod
    def _generate_key(prefix: str, *args: Any, **kwargs: Any) -> str:
        """Generate cache key; arrays are hashed by dtype, shape and raw bytes"""
        key_parts = [prefix]
        for arg in list(args) + [value for _, value in sorted(kwargs.items())]:
            if isinstance(arg, np.ndarray):
                digest = hashlib.md5()
                digest.update(str((arg.dtype.str, arg.shape)).encode())
                digest.update(np.ascontiguousarray(arg).tobytes())
                key_parts.append(digest.hexdigest())
            elif isinstance(arg, float):
                key_parts.append(repr(arg))
            else:
                key_parts.append(str(arg))
        return ":".join(key_parts)

    def get(self, key: str) -> Optional[Any]:
        value = self.memory_cache.get(key)
        if value is None:
            self._misses += 1
        else:
            self._hits += 1
        return value

    def set(self, key: str, value: Any) -> None:
        self._sets += 1
        self.memory_cache.set(key, value)

    def clear(self, pattern: Optional[str] = None) -> None:
        """Clear cache entries"""
        if pattern is None:
            self.memory_cache.clear()
            return
        for key in self.memory_cache.keys(pattern):
            self.memory_cache.delete(key)

    def stats(self) -> Dict[str, Any]:
        """Get cache statistics"""
        total_requests = self._hits + self._misses
        hit_rate = (self._hits / total_requests * 100) if total_requests > 0 else 0
        return {
            'hits': self._hits,
            'misses': self._misses,
            'sets': self._sets,
            'hit_rate': f"{hit_rate:.2f}%",
            'size': self.memory_cache.size(),
        }


# Global cache service instance
cache_service = CacheService()


def cached(prefix: str) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    """Decorator for caching results of pure functions of arrays and scalars"""
    def decorator(func: Callable[..., Any]) -> Callable[..., Any]:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            cache_key = cache_service._generate_key(prefix, *args, **kwargs)
            cached_result = cache_service.get(cache_key)
            if cached_result is not None:
                return cached_result

            logger.debug(f"Cache miss for {func.__name__}: {cache_key}")
            result = func(*args, **kwargs)
            cache_service.set(cache_key, result)
            return result

        return wrapper
    return decorator
