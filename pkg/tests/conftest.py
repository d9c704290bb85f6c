import numpy as np
import pytest

from hfmdp.generators import random_tree, two_subsystem_example


@pytest.fixture
def golden():
    """The two-subsystem tree (M1 root, M2 child) with all-ones weights."""
    return two_subsystem_example()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_random_tree():
    def make(seed, **kwargs):
        return random_tree(np.random.default_rng(seed), **kwargs)
    return make
