import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from msgrid import CoefficientField, build_mesh

# Keep tests independent of any previously cached KL bases on this machine.
os.environ.setdefault("MSG_CACHE_DIR", "off")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_mesh():
    return build_mesh(8, 8, 2, 2)


@pytest.fixture
def small_field(small_mesh, rng):
    values = np.exp(rng.standard_normal(small_mesh.n_cells))
    return CoefficientField(values, small_mesh)


def random_field(mesh, seed):
    rng_ = np.random.default_rng(seed)
    return CoefficientField(np.exp(rng_.standard_normal(mesh.n_cells)), mesh)
