"""
Ensemble runner
===============
Fans independent seeded runs out over a thread pool and gathers them back
in seed order.

Each run owns its own random stream (seeded generator), so runs share no
mutable state and the gathered result does not depend on completion order.

Concurrency
-----------
- `max_concurrency` bounds how many runs are in flight (asyncio.Semaphore).
- Work executes in the loop's default executor; numpy releases the GIL
  for the array work inside each run.
"""

from __future__ import annotations

import asyncio
import logging
from functools import partial
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_CONCURRENCY = 4


# ============================================================================
# Single run
# ============================================================================

async def _run_one(
    semaphore: asyncio.Semaphore,
    job: Callable[[int], T],
    seed: int,
) -> tuple[int, T]:
    async with semaphore:
        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(None, partial(job, seed))
        logger.debug(f"Ensemble member seed={seed} finished")
        return seed, result


# ============================================================================
# Public API
# ============================================================================

async def run_ensemble_async(
    job: Callable[[int], T],
    seeds: Sequence[int],
    max_concurrency: int = DEFAULT_CONCURRENCY,
) -> List[T]:
    """
    Run `job(seed)` for every seed with bounded concurrency.

    Args:
        job:             Callable taking a seed and returning one result.
        seeds:           Seeds to run; duplicates are rejected.
        max_concurrency: Upper bound on simultaneously running jobs.

    Returns:
        Results ordered by ascending seed.
    """
    if len(set(seeds)) != len(seeds):
        raise ValueError("Ensemble seeds must be unique")
    semaphore = asyncio.Semaphore(max(1, max_concurrency))
    done = await asyncio.gather(*(_run_one(semaphore, job, seed) for seed in seeds))
    logger.info(f"Ensemble of {len(done)} runs complete")
    return [result for _, result in sorted(done, key=lambda pair: pair[0])]


def run_ensemble(
    job: Callable[[int], T],
    seeds: Sequence[int],
    max_concurrency: int = DEFAULT_CONCURRENCY,
) -> List[T]:
    """Blocking wrapper around run_ensemble_async."""
    return asyncio.run(run_ensemble_async(job, seeds, max_concurrency))


def seed_range(seed: int, size: int) -> List[int]:
    """The seeds seed, seed + 1, ..., seed + size - 1."""
    if size < 1:
        raise ValueError("Ensemble size must be at least 1")
    return list(range(seed, seed + size))
