"""Helper utilities and common functions."""
import time
from typing import Dict, Iterator, List, Optional, Sequence, TypeVar

import numpy as np

from src.utils.config import get_settings

settings = get_settings()

T = TypeVar("T")


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """Create a seeded random generator.

    Args:
        seed: Seed value; falls back to the SEED setting

    Returns:
        numpy Generator
    """
    return np.random.default_rng(settings.SEED if seed is None else seed)


def chunk_list(items: Sequence[T], chunk_size: int) -> List[Sequence[T]]:
    """Split a sequence into chunks of specified size.

    Args:
        items: Sequence to split
        chunk_size: Size of each chunk

    Returns:
        List of chunks
    """
    return [items[i:i + chunk_size] for i in range(0, len(items), chunk_size)]


def safe_divide(numerator: float, denominator: float, default: float = 0.0) -> float:
    """Safely divide two numbers, returning default if division by zero.

    Args:
        numerator: Numerator
        denominator: Denominator
        default: Default value if division by zero

    Returns:
        Result of division or default value
    """
    if denominator == 0 or np.isnan(denominator) or np.isnan(numerator):
        return default
    return numerator / denominator


class StageTimer:
    """Accumulates wall-clock milliseconds per named stage.

    Usage::

        timer = StageTimer()
        with timer.stage("segment"):
            ...
        timer.timings_ms  # {"segment": 12.3}
    """

    def __init__(self) -> None:
        self.timings_ms: Dict[str, float] = {}

    class _Span:
        def __init__(self, owner: "StageTimer", name: str) -> None:
            self.owner = owner
            self.name = name
            self.start = 0.0

        def __enter__(self) -> "StageTimer._Span":
            self.start = time.perf_counter()
            return self

        def __exit__(self, *exc: object) -> None:
            elapsed = (time.perf_counter() - self.start) * 1000.0
            self.owner.timings_ms[self.name] = self.owner.timings_ms.get(self.name, 0.0) + elapsed

    def stage(self, name: str) -> "StageTimer._Span":
        return StageTimer._Span(self, name)

    def total_ms(self) -> float:
        return float(sum(self.timings_ms.values()))

    def __iter__(self) -> Iterator[str]:
        return iter(self.timings_ms)
