"""Shared fixtures: cheap critical values reused across test modules.

The acceptance suite recomputes the headline critical values at the full
simulation budget; everything else runs on these reduced budgets, which are
accurate to a few hundredths and take a couple of seconds each.
"""

import numpy as np
import pytest

from cpstream.critvals import (
    CritValKind,
    CritValRequest,
    MonteCarloProvider,
    compute_critval,
)


@pytest.fixture(scope="session")
def cv_offline_d1():
    return compute_critval(
        CritValRequest(
            kind=CritValKind.OFFLINE_MAX,
            alpha=0.05,
            d=1,
            grid_steps=2000,
            replications=20_000,
            seed=0,
        )
    )


@pytest.fixture(scope="session")
def cv_offline_d2():
    return compute_critval(
        CritValRequest(
            kind=CritValKind.OFFLINE_MAX,
            alpha=0.05,
            d=2,
            grid_steps=1000,
            replications=10_000,
            seed=0,
        )
    )


@pytest.fixture(scope="session")
def cv_standard_d1():
    return compute_critval(
        CritValRequest(
            kind=CritValKind.ONLINE_STANDARD,
            alpha=0.05,
            d=1,
            gamma=0.0,
            grid_steps=2000,
            replications=20_000,
            seed=0,
        )
    )


@pytest.fixture(scope="session")
def cv_ratio_d1():
    return compute_critval(
        CritValRequest(
            kind=CritValKind.ONLINE_RATIO,
            alpha=0.05,
            d=1,
            gamma=0.0,
            grid_steps=400,
            replications=4000,
            horizon_T=10.0,
            seed=3,
        )
    )


@pytest.fixture(scope="session")
def cheap_provider():
    """Memoised provider with test-sized budgets."""
    return MonteCarloProvider(seed=0, grid_steps=1000, replications=5000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
