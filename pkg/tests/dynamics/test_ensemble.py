"""
Ensemble Runner Tests
"""

import time

import numpy as np
import pytest

from app.schemas.dynamics_schemas import ChannelModel, RateModel, TrapState
from app.schemas.optics_schemas import Illumination
from app.services.trap_service import simulate_trace
from app.task.ensemble import run_ensemble, run_ensemble_async, seed_range


def slow_square(seed: int) -> int:
    time.sleep(0.01 * (5 - seed))
    return seed * seed


@pytest.mark.unit
class TestEnsembleRunner:
    """Test fan-out and seed-ordered gathering."""

    def test_results_in_seed_order(self):
        """Later seeds finishing first does not change the order."""
        assert run_ensemble(slow_square, [0, 1, 2, 3, 4], max_concurrency=5) == [0, 1, 4, 9, 16]

    def test_unsorted_seeds(self):
        assert run_ensemble(slow_square, [3, 1, 2]) == [1, 4, 9]

    def test_duplicate_seeds(self):
        with pytest.raises(ValueError):
            run_ensemble(slow_square, [1, 1])

    async def test_async_entry_point(self):
        results = await run_ensemble_async(slow_square, [2, 0], max_concurrency=1)

        assert results == [0, 4]

    def test_seed_range(self):
        assert seed_range(5, 3) == [5, 6, 7]
        with pytest.raises(ValueError):
            seed_range(0, 0)


@pytest.mark.integration
@pytest.mark.dynamics
class TestEnsembleTraces:
    def test_matches_sequential_runs(self):
        """Concurrent runs equal the same seeds run one by one."""
        def job(seed: int):
            return simulate_trace(ChannelModel(), RateModel(), Illumination(), -0.45, TrapState(), 20.0, 0.5, seed)

        concurrent = run_ensemble(job, seed_range(10, 6), max_concurrency=3)
        sequential = [job(seed) for seed in seed_range(10, 6)]

        for a, b in zip(concurrent, sequential):
            assert a.seed == b.seed
            assert np.array_equal(a.current, b.current)
