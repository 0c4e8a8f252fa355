"""Shared fixtures for the simulation-heavy consistency tests.

Replication r of a Monte Carlo run draws from the substream
(seed, r << 32), so the first k rows of a larger cached run are
bit-identical to a fresh k-replication run.  Tests that need fewer
replications slice the cached records instead of rerunning.
"""

from __future__ import annotations

import pytest

from cdfdyn.sim import MonteCarloConfig, run_monte_carlo

_CACHE: dict = {}


def _run(n: int, q: int, reps: int):
    key = (n, q, reps)
    if key not in _CACHE:
        _CACHE[key] = run_monte_carlo(MonteCarloConfig(reps=reps, n=n, q=q))
    return _CACHE[key]


@pytest.fixture(scope="session")
def mc_run():
    """Memoized Monte Carlo runner keyed by (n, q, reps)."""
    return _run
