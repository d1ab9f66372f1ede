import numpy as np

from services.cache_service import CacheService, MemoryCache, cache_service, cached


def test_lru_eviction():
    cache = MemoryCache(max_size=2)
    cache.set("a", 1)
    cache.set("b", 2)
    cache.get("a")
    cache.set("c", 3)
    assert cache.get("b") is None
    assert cache.get("a") == 1 and cache.get("c") == 3


def test_array_keys_depend_on_content():
    first = CacheService._generate_key("gram", np.arange(3.0), 0.5)
    assert first == CacheService._generate_key("gram", np.arange(3.0), 0.5)
    assert first != CacheService._generate_key("gram", np.arange(3.0) + 1, 0.5)
    assert first != CacheService._generate_key("gram", np.arange(3), 0.5)


def test_cached_decorator_counts_hits():
    calls = []

    @cached("test_square")
    def square(values):
        calls.append(1)
        return values ** 2

    hits = cache_service.stats()['hits']
    square(np.arange(4.0))
    square(np.arange(4.0))
    assert len(calls) == 1
    assert cache_service.stats()['hits'] == hits + 1

    cache_service.clear("test_square*")
    square(np.arange(4.0))
    assert len(calls) == 2
