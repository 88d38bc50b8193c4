import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit_quad(space, rng):
    v = rng.standard_normal((space.mesh.n_cells, space.n_quad, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)
