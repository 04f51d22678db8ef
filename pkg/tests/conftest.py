import os
import sys

import numpy as np
import pytest

# Add project root to path to allow running directly
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: regime reproduction runs (minutes)")


def pytest_collection_modifyitems(config, items):
    # slow runs only when selected explicitly: pytest -m slow
    if "slow" in (config.getoption("-m") or ""):
        return
    skip_slow = pytest.mark.skip(reason="slow; run with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
