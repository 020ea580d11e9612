import numpy as np
import pytest

from dpsgd_audit.cache import DiskCache, default_cache_dir


@pytest.fixture(scope="session")
def accountant_cache():
    """Shared on-disk cache; first run pays the accountant cost once."""
    return DiskCache(default_cache_dir())


@pytest.fixture()
def rng():
    return np.random.default_rng(20240801)
