import numpy as np
import pytest

from hfmdp.local_planner import (OWN, LocalPolicyBank, SubsystemView, adjusted_reward, bellman_gap,
                                 conservation_matrix, conservation_residual, deterministic_choice,
                                 evaluate_choice, local_value_entry, marginalize_flow, record_policy,
                                 solve_standalone)
from hfmdp.model import RelevanceWeights, Scope


def _m2_view(tree):
    return SubsystemView(tree[1], tree.sepset(1))


def test_root_standalone_values(golden):
    tree, weights = golden
    m1 = tree[0]
    sol = solve_standalone(m1, tree.discount, weights[0], m1.reward)
    np.testing.assert_allclose(sol.values, [0.0, -3.0], atol=1e-9)
    assert sol.objective == pytest.approx(-3.0)
    assert sol.solved_by == "lp"


def test_child_standalone_values(golden):
    tree, weights = golden
    m2 = tree[1]
    sol = solve_standalone(m2, tree.discount, weights[1], m2.reward)
    # alone, M2 controls x as well, so y can be kept on forever
    np.testing.assert_allclose(sol.values, [90.0, 100.0], atol=1e-8)
    assert sol.objective == pytest.approx(190.0)


def test_flow_conserves_mass(golden):
    tree, weights = golden
    for j, m in enumerate(tree.subsystems):
        sol = solve_standalone(m, tree.discount, weights[j], m.reward)
        assert conservation_residual(m, tree.discount, weights[j], sol.flow) <= 1e-8
        assert np.all(sol.flow >= 0)
        assert sol.flow.sum() == pytest.approx(weights[j].sum() / (1 - tree.discount))
        np.testing.assert_allclose(sol.per_state(m).sum(), sol.flow.sum())


def test_conservation_matrix_shape(golden):
    tree, _ = golden
    m2 = tree[1]
    matrix = conservation_matrix(m2, 0.9)
    assert matrix.shape == (2, 8)
    # columns sum to 1 - γ for a normalized CPT
    np.testing.assert_allclose(matrix.sum(axis=0), np.full(8, 0.1))


def test_adjusted_reward_subtracts_own_and_adds_children(golden):
    tree, _ = golden
    view = _m2_view(tree)
    adjusted = adjusted_reward(view, own_message=np.array([0.0, 9.0]))
    scope = tree[1].scope
    x_of = scope.projection(Scope([scope.variable("x")]))
    np.testing.assert_allclose(adjusted.adjustment, -9.0 * x_of)
    np.testing.assert_allclose(adjusted.values, tree[1].reward - 9.0 * x_of)

    root_view = SubsystemView(tree[0], tree.sepset(0), {1: tree.sepset(1)})
    adjusted = root_view.adjusted_reward(None, {1: np.array([1.0, 10.0])})
    np.testing.assert_allclose(adjusted.adjustment, [1.0, 1.0, 10.0, 10.0])


def test_message_changes_local_policy(golden):
    tree, weights = golden
    m2 = tree[1]
    view = _m2_view(tree)
    # charging 100 for x = 1 makes turning y on not worth it
    reward = adjusted_reward(view, own_message=np.array([0.0, 100.0]))
    sol = solve_standalone(m2, tree.discount, weights[1], reward)
    marginal = marginalize_flow(sol, tree.sepset(1), m2.scope)
    assert marginal[1] == pytest.approx(0.0, abs=1e-9)
    assert local_value_entry(sol, m2.reward) == pytest.approx(10.0 * sol.per_state(m2)[1])


def test_child_keeps_x_on_for_local_value_95(golden):
    tree, _ = golden
    weights = RelevanceWeights.normalized(tree)
    m2 = tree[1]
    sol = solve_standalone(m2, tree.discount, weights[1], adjusted_reward(_m2_view(tree)))
    np.testing.assert_allclose(marginalize_flow(sol, tree.sepset(1), m2.scope), [0.0, 10.0], atol=1e-9)
    assert local_value_entry(sol, m2.reward) == pytest.approx(95.0)


def test_deterministic_choice_evaluates_to_lp_values(golden):
    tree, weights = golden
    m2 = tree[1]
    sol = solve_standalone(m2, tree.discount, weights[1], m2.reward)
    choice = deterministic_choice(m2, sol.flow)
    assert choice is not None
    values = evaluate_choice(m2, tree.discount, choice, m2.reward)
    np.testing.assert_allclose(values, sol.values, atol=1e-8)
    assert bellman_gap(m2, tree.discount, m2.reward, values) <= 1e-9
    assert bellman_gap(m2, tree.discount, m2.reward, values - 1.0) > 0


def test_deterministic_choice_rejects_split_flow(golden):
    tree, _ = golden
    m1 = tree[0]
    flow = np.full(4, 5.0)
    assert deterministic_choice(m1, flow) is None


def test_policy_bank_is_append_only_and_deduplicated(golden):
    tree, weights = golden
    m2 = tree[1]
    bank = LocalPolicyBank(_m2_view(tree))
    first = solve_standalone(m2, tree.discount, weights[1], m2.reward)
    bank, changed = record_policy(bank, first)
    assert changed
    bank, changed = record_policy(bank, first.flow.copy())
    assert not changed
    assert len(bank) == 1
    other = solve_standalone(m2, tree.discount, weights[1],
                             adjusted_reward(_m2_view(tree), np.array([0.0, 100.0])))
    assert bank.add_flow(other.flow)
    assert len(bank) == 2
    assert bank.matrix(OWN).shape == (2, 2)
    np.testing.assert_allclose(bank.matrix(OWN).sum(axis=1), [20.0, 20.0])
    np.testing.assert_allclose(bank.value_vector, [local_value_entry(first, m2.reward),
                                                   local_value_entry(other, m2.reward)])
