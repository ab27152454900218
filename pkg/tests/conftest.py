import numpy as np
import pytest

from regime_select import ModelSpec, RegimeParams, simulate
from regime_select._validation import generator


@pytest.fixture(scope="session")
def benchmark_spec():
    """Well-separated two-state model used throughout the suite."""
    return ModelSpec(
        [RegimeParams(-2.0, 0.3, 1.0), RegimeParams(2.0, -0.2, 1.0)],
        [[0.9, 0.1], [0.1, 0.9]],
    )


@pytest.fixture(scope="session")
def benchmark_traj(benchmark_spec):
    return simulate(benchmark_spec, 2000, y0=0.0, seed=11)


def random_valid_spec(seed, m, slope_lo=0.05, slope_hi=0.9):
    """Random admissible model with signed slopes and moderate scales."""
    rng = generator(seed)
    signs = rng.choice([-1.0, 1.0], size=m)
    regimes = [
        RegimeParams(
            b=float(rng.uniform(-2.0, 2.0)),
            alpha=float(signs[i] * rng.uniform(slope_lo, slope_hi)),
            sigma2=float(rng.uniform(0.25, 4.0)),
        )
        for i in range(m)
    ]
    transition = rng.dirichlet(np.full(m, 5.0), size=m)
    return ModelSpec(regimes, transition)


def random_instance(seed, m, n):
    """Random model plus simulated trajectory of length n."""
    spec = random_valid_spec(seed, m)
    rng = generator(seed, 1)
    traj = simulate(spec, n, y0=float(rng.normal()), seed=int(rng.integers(0, 2**31)))
    return spec, traj
