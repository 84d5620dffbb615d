"""
EvoSeed – Utilities
Shared helpers: application directory, keyed rng streams and phase timing.
"""

import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np


def get_app_dir() -> Path:
    """
    Return the base directory for the application.
    - In source mode: directory of this file (EvoSeed root).
    - In frozen mode: directory of the executable.
    """
    if getattr(sys, 'frozen', False):
        return Path(sys.executable).parent
    return Path(__file__).parent


def spawn_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent, reproducible generator for (seed, *keys).

    The same keys always give the same stream, so two workers asking for
    (seed, trial) draw identical coins while (seed, trial, 1) is unrelated.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


@contextmanager
def stopwatch(sink: dict, key: str) -> Iterator[None]:
    """Add the elapsed milliseconds of the block to sink[key]."""
    start = time.perf_counter()
    try:
        yield
    finally:
        sink[key] = sink.get(key, 0.0) + (time.perf_counter() - start) * 1000.0
