import numpy as np
import pytest

from momarket import calibrate_base_utility, generate_synthetic_scenario


@pytest.fixture(scope="session")
def small_scenario():
    """4-region world, moderate heterogeneity, calibrated for two operators."""
    s = generate_synthetic_scenario(4, 20, 0.6, seed=11, demand_per_region=20.0,
                                    total_fleet=12)
    return s.with_base_utility(calibrate_base_utility(s, 2))


@pytest.fixture(scope="session")
def high_cv_scenario():
    """6-region high-variability world calibrated for two operators."""
    s = generate_synthetic_scenario(6, 20, 1.3, seed=42)
    return s.with_base_utility(calibrate_base_utility(s, 2))


@pytest.fixture(scope="session")
def tiny_scenario():
    """2-region symmetric-ish world for fast episode loops."""
    s = generate_synthetic_scenario(2, 20, 0.0, seed=3, demand_per_region=10.0,
                                    total_fleet=6)
    return s.with_base_utility(calibrate_base_utility(s, 2))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
