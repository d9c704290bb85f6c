import numpy as np
import pytest

from hfmdp.errors import OracleCapError
from hfmdp.generators import chain, shared_state_tree
from hfmdp.oracle import (centralized_factored_lp, check_global_feasibility, evaluate_policy, exact_bellman_lp,
                          exact_dual_flows, greedy_policy, joint_values, joint_weights, solve_flat)
from hfmdp.utils import marginalize
from hfmdp.validation import build_equivalent_mdp

GOLDEN_VALUES = [54.0, 64.0, 60.0, 70.0]


def test_exact_values_of_golden(golden):
    tree, weights = golden
    mdp, exact = solve_flat(tree, weights)
    np.testing.assert_allclose(exact.values, GOLDEN_VALUES, atol=1e-8)
    assert exact.objective == pytest.approx(124.0)
    # a = 1 everywhere; b only matters once x is on, so ties pick b = 0
    assert list(exact.policy) == [2, 2, 3, 3]
    np.testing.assert_allclose(evaluate_policy(mdp, exact.policy), exact.values, atol=1e-8)


def test_primal_and_dual_oracles_agree(rng):
    tree, weights = shared_state_tree(rng)
    mdp = build_equivalent_mdp(tree)
    alpha = joint_weights(tree, weights)
    primal = exact_bellman_lp(mdp, alpha)
    flows, values, objective = exact_dual_flows(mdp, alpha)
    np.testing.assert_allclose(values, primal.values, atol=1e-7)
    assert objective == pytest.approx(primal.objective)
    assert flows.sum() == pytest.approx(alpha.sum() / (1 - tree.discount))
    np.testing.assert_array_equal(greedy_policy(mdp, values), greedy_policy(mdp, primal.values))


def test_joint_weights_marginalize_to_subsystem_weights(rng):
    tree, weights = shared_state_tree(rng)
    alpha = joint_weights(tree, weights)
    states = tree.internal_scope
    for j, m in enumerate(tree.subsystems):
        np.testing.assert_allclose(marginalize(alpha, states.projection(m.internal), m.internal.size), weights[j])


def test_joint_values_sum_subsystem_values(golden):
    tree, _ = golden
    joint = joint_values(tree, [np.array([0.0, 6.0]), np.array([54.0, 64.0])])
    np.testing.assert_allclose(joint, GOLDEN_VALUES)


def test_centralized_lp_matches_exact_on_golden(golden):
    tree, weights = golden
    central = centralized_factored_lp(tree, weights)
    assert central.objective == pytest.approx(124.0)
    np.testing.assert_allclose(joint_values(tree, central.values), GOLDEN_VALUES, atol=1e-7)
    np.testing.assert_allclose(central.adjustments[0], central.messages[1][tree[0].scope.projection(tree.sepset(1))],
                               atol=1e-9)


def test_centralized_values_are_globally_feasible(golden):
    tree, weights = golden
    central = centralized_factored_lp(tree, weights)
    report = check_global_feasibility(tree, central.values)
    assert report.feasible()
    assert report.checked == 16
    assert not report.sampled
    zero = check_global_feasibility(tree, [np.zeros(2), np.zeros(2)])
    assert zero.max_violation == pytest.approx(10.0)
    assert not zero.feasible()


def test_feasibility_check_samples_large_spaces(golden):
    tree, weights = golden
    central = centralized_factored_lp(tree, weights)
    report = check_global_feasibility(tree, central.values, sample_cap=5, seed=3)
    assert report.sampled
    assert report.checked == 5
    assert report.feasible()


def test_feasibility_sampling_never_builds_the_joint_space():
    tree, weights = chain(20, np.random.default_rng(7))
    assert tree.variables.size == 2 ** 40
    central = centralized_factored_lp(tree, weights)
    report = check_global_feasibility(tree, central.values, sample_cap=2 ** 10, seed=1)
    assert report.sampled
    assert report.checked == 2 ** 10
    assert report.feasible(1e-7)
    zero = check_global_feasibility(tree, [np.zeros(2)] * len(tree), sample_cap=2 ** 10, seed=1)
    assert zero.checked == 2 ** 10
    assert zero.worst.count("=") == 40


def test_feasibility_sampling_beyond_int64_indices():
    tree, _ = chain(70, np.random.default_rng(7))
    assert tree.variables.size == 2 ** 140
    report = check_global_feasibility(tree, [np.zeros(2)] * len(tree), sample_cap=64, seed=2)
    assert report.sampled
    assert report.checked == 64
    again = check_global_feasibility(tree, [np.zeros(2)] * len(tree), sample_cap=64, seed=2)
    assert again.max_violation == report.max_violation


def test_centralized_bounds_exact_from_above(make_random_tree):
    for seed in range(15):
        tree, weights = make_random_tree(seed, max_joint=2 ** 8)
        central = centralized_factored_lp(tree, weights)
        _, exact = solve_flat(tree, weights)
        assert central.objective >= exact.objective - 1e-6
        assert check_global_feasibility(tree, central.values).feasible(1e-7)
        joint = joint_values(tree, central.values)
        assert np.all(joint >= exact.values - 1e-6)


def test_oracle_cap(golden):
    tree, weights = golden
    with pytest.raises(OracleCapError):
        solve_flat(tree, weights, cap=4)
    mdp = build_equivalent_mdp(tree)
    with pytest.raises(OracleCapError):
        exact_bellman_lp(mdp, np.ones(4), cap=15)


def test_oracle_cap_holds_past_int64_sizes():
    tree, weights = chain(70, np.random.default_rng(3))
    assert tree.internal_scope.size == 2 ** 70
    assert tree.external_scope.size == 2 ** 70
    with pytest.raises(OracleCapError):
        build_equivalent_mdp(tree)
    with pytest.raises(OracleCapError):
        solve_flat(tree, weights)
