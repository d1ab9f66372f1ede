"""
DMBN Toolkit - Common Utility Functions
Helper functions used throughout the toolkit: filesystem, random streams,
timing and small collection utilities.
"""

import json
import os
import time
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np

logger = logging.getLogger(__name__)


# ========== FILE UTILITIES ==========

def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure directory exists, create if not"""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    """Write a JSON document with stable key order"""
    target = Path(path)
    ensure_directory(target.parent)
    with open(target, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=_json_default)
    return target


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON document"""
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")

# ========== RANDOM STREAMS ==========

def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Create the main random stream of a chain"""
    return np.random.default_rng(np.random.SeedSequence(seed))


def substream(seed: Optional[int], *key: int) -> np.random.Generator:
    """Independent, reproducible substream keyed by integers (iteration, cell, ...)"""
    entropy = 0 if seed is None else seed
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=tuple(int(k) for k in key)))


def resolve_thread_count(requested: Optional[int] = None) -> int:
    """Data-parallel width, capped by the CPU count"""
    cap = os.cpu_count() or 1
    if requested is None:
        return 1
    return max(1, min(requested, cap))


def fresh_seed() -> int:
    """Entropy-derived seed, recorded so an unseeded run can be replayed"""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0])

# ========== COLLECTION UTILITIES ==========

def upper_pairs(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the strict upper triangle (i < j)"""
    return np.triu_indices(n, k=1)

# ========== TIMING UTILITIES ==========

class StepTimer:
    """Accumulates wall-clock seconds per named step"""

    def __init__(self) -> None:
        self.totals: Dict[str, float] = defaultdict(float)
        self.counts: Dict[str, int] = defaultdict(int)
        self._started = time.perf_counter()

    @contextmanager
    def measure(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - start
            self.counts[name] += 1

    @property
    def wall_clock(self) -> float:
        return time.perf_counter() - self._started

    def summary(self) -> Dict[str, Any]:
        """Get timing summary"""
        return {
            'wall_clock_seconds': self.wall_clock,
            'steps': {
                name: {'seconds': self.totals[name], 'calls': self.counts[name]}
                for name in self.totals
            },
        }


def parse_override(assignment: str) -> Tuple[List[str], Any]:
    """Parse 'section.key=value' into (['section', 'key'], value)"""
    if "=" not in assignment:
        raise ValueError(f"Override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ValueError(f"Override has an empty key: {assignment!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def set_nested(target: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    """Set target[path[0]][path[1]]... = value, creating sections as needed"""
    node = target
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value
