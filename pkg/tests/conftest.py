import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kdlab.data import make_spec, sample_dataset, split_dataset
from kdlab.tensor import make_rng

settings.register_profile(
    "kdlab", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=50
)
settings.load_profile("kdlab")


@pytest.fixture(scope="session")
def micro_dataset():
    """Small, well-separated 3-class dataset for fast pipeline tests.

    sigma is kept low so even a few epochs of training beat chance clearly.
    """
    spec = make_spec(make_rng(101, "spec"), num_classes=3, dim=6, delta_mu=2.0, sigma=1.5)
    ds = sample_dataset(make_rng(101, "samples"), spec, 1200)
    ds = split_dataset(make_rng(101, "split"), ds, (0.8, 0.1, 0.1))
    return spec, ds


@pytest.fixture()
def rng():
    return make_rng(2024)


def simplex_rows(rng: np.random.Generator, n: int, c: int) -> np.ndarray:
    """Random interior points of the probability simplex (Dirichlet-ish)."""
    g = -np.log(rng.random((n, c)))
    return g / g.sum(axis=1, keepdims=True)
