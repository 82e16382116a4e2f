"""Seed handling.

Every random stream is a Philox counter-based generator keyed by the run seed
plus a tuple of integers naming the task (purpose, block index, ...).  Work is
split into fixed blocks, so the numbers a block sees never depend on how many
threads processed the run.
"""

from __future__ import annotations

import secrets
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

# stream purposes; keep stable, they are part of the reproducibility contract
ORBIT = 1
INITIAL = 2
PERTURB = 3
PROBE = 4
ENSEMBLE = 5
TILT = 6


def resolve_seed(seed: int | None) -> int:
    """Return ``seed`` or draw a fresh 63-bit seed when it is ``None``."""
    if seed is None:
        return secrets.randbits(63)
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for task ``key`` under run ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def run_blocks(fn: Callable[[int], T], n_blocks: int, threads: int = 1) -> list[T]:
    """Evaluate ``fn(0..n_blocks-1)`` and return results in block order."""
    if threads <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_blocks)))


def block_sizes(total: int, block: int) -> Sequence[int]:
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])
