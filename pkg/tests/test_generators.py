import numpy as np
import pytest

from hfmdp.generators import (bundled_model_names, chain, engine_example, random_tree, shared_state_tree, star,
                              twin_subtrees)
from hfmdp.validation import validate_tree


def test_random_tree_respects_size_and_is_reproducible():
    for seed in range(25):
        tree, weights = random_tree(np.random.default_rng(seed), max_joint=2 ** 10)
        assert 2 <= len(tree) <= 4
        assert tree.variables.size <= 2 ** 10
        assert 0.5 <= tree.discount <= 0.95
        assert validate_tree(tree, weights).ok
    a, _ = random_tree(np.random.default_rng(3))
    b, _ = random_tree(np.random.default_rng(3))
    np.testing.assert_array_equal(a[1].cpt, b[1].cpt)


def test_random_tree_honours_explicit_shape():
    tree, _ = random_tree(np.random.default_rng(0), n_subsystems=3, discount=0.8)
    assert len(tree) == 3
    assert tree.discount == pytest.approx(0.8)


@pytest.mark.parametrize("n", [2, 5])
def test_chain_and_star_shapes(n, rng):
    tree, _ = chain(n, rng)
    assert [tree.depth(j) for j in range(n)] == list(range(n))
    tree, _ = star(n, rng)
    assert tree.children(0) == list(range(1, n))
    assert all(tree.is_leaf(j) for j in range(1, n))


def test_structured_generators_are_consistent(rng):
    for make in (twin_subtrees, shared_state_tree):
        tree, weights = make(rng)
        assert validate_tree(tree, weights).ok
    tree, _ = twin_subtrees(rng)
    np.testing.assert_array_equal(tree[1].reward, tree[3].reward)
    assert tree[1].class_name == tree[3].class_name == "Mid"


def test_engine_example():
    assert "engine" in bundled_model_names()
    tree, weights = engine_example()
    assert tree[0].name == "EngineControl"
    assert {tree[k].name for k in tree.children(0)} == {"FuelInjection", "SpeedControl"}
    assert validate_tree(tree, weights).ok
