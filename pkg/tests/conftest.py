from __future__ import annotations

import numpy as np
import pytest

pytest_plugins = ["rbmtest.plugin", "pytester"]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
