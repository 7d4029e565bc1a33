from __future__ import annotations

import numpy as np
import pytest

from spdechar import parallel


@pytest.fixture(autouse=True)
def _single_thread_default():
    parallel.set_threads(None)
    yield
    parallel.set_threads(None)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
