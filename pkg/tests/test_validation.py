import itertools

import numpy as np
import pytest

from hfmdp.errors import DegenerateModelError, InputError, OracleCapError
from hfmdp.generators import shared_state_tree
from hfmdp.model import (BasicSubsystem, RelevanceWeights, Scope, SubsystemTree, VariableDecl, assignment_at,
                         combine, restrict)
from hfmdp.validation import (build_equivalent_mdp, check_consistent_dynamics, check_normalization,
                              check_relevance_weights, check_running_intersection, validate_tree)


def _vars(*names):
    return [VariableDecl(n, ("0", "1"), i) for i, n in enumerate(names)]


def _subsystem(name, internal, external=(), cpt=None, seed=0):
    rng = np.random.default_rng(seed)
    scope = Scope(list(internal) + list(external))
    size = Scope(internal).size
    if cpt is None:
        cpt = rng.dirichlet(np.ones(size), size=scope.size)
    return BasicSubsystem(name, Scope(internal), Scope(external), rng.normal(size=scope.size), cpt)


def test_golden_tree_is_consistent(golden):
    tree, weights = golden
    report = validate_tree(tree, weights)
    assert report.ok
    assert report.to_dict() == {"ok": True, "violations": []}


def test_unnormalized_cpt_is_reported():
    x, a = _vars("x", "a")
    bad = _subsystem("M", [x], [a], cpt=np.full((4, 2), 0.7))
    tree = SubsystemTree([bad], {}, 0.9)
    report = check_normalization(tree)
    assert report.kinds() == ["normalization"]
    assert report.violations[0].magnitude == pytest.approx(0.4)
    assert report.violations[0].subsystems == ("M",)


def test_negative_cpt_entry_is_reported():
    x, a = _vars("x", "a")
    cpt = np.tile([1.2, -0.2], (4, 1))
    tree = SubsystemTree([_subsystem("M", [x], [a], cpt=cpt)], {}, 0.9)
    report = check_normalization(tree)
    assert any("negative" in v.detail for v in report.violations)


def test_running_intersection_violation_names_the_variable():
    r, m, c = _vars("r", "m", "c")
    top = _subsystem("A", [r])
    middle = _subsystem("B", [m])
    bottom = _subsystem("C", [c], [r])
    tree = SubsystemTree([top, middle, bottom], {1: 0, 2: 1}, 0.9)
    report = check_running_intersection(tree)
    assert not report.ok
    violation = report.violations[0]
    assert violation.kind == "running-intersection"
    assert violation.variables == ("r",)
    assert set(violation.subsystems) == {"A", "C"}
    assert "B" in violation.detail


def test_running_intersection_holds_on_random_trees(make_random_tree):
    for seed in range(20):
        tree, weights = make_random_tree(seed)
        assert check_running_intersection(tree).ok
        assert validate_tree(tree, weights).ok


def test_shared_state_with_matching_dynamics_passes(rng):
    tree, weights = shared_state_tree(rng)
    assert check_consistent_dynamics(tree).ok
    assert check_relevance_weights(tree, weights).ok


def test_shared_state_with_different_dynamics_fails():
    x, y = _vars("x", "y")
    stay = np.array([[1.0, 0.0], [0.0, 1.0]])
    parent = _subsystem("P", [x], cpt=stay)
    child = _subsystem("C", [x, y], cpt=np.full((4, 4), 0.25))
    tree = SubsystemTree([parent, child], {1: 0}, 0.9)
    report = check_consistent_dynamics(tree)
    assert report.kinds() == ["dynamics"]
    assert report.violations[0].variables == ("x",)
    assert report.violations[0].magnitude == pytest.approx(0.5)


def test_disagreeing_weights_are_reported(golden):
    tree, _ = golden
    lopsided = RelevanceWeights.from_named(tree, {"M1": (1.0, 1.0), "M2": (3.0, 3.0)})
    report = check_relevance_weights(tree, lopsided)
    assert report.kinds() == ["weights"]
    assert report.violations[0].magnitude == pytest.approx(4.0)
    negative = RelevanceWeights.from_named(tree, {"M1": (3.0, -1.0), "M2": (1.0, 1.0)})
    assert not check_relevance_weights(tree, negative).ok


def test_zero_weights_are_allowed(golden):
    tree, _ = golden
    weights = RelevanceWeights.from_named(tree, {"M1": (2.0, 0.0), "M2": (1.0, 1.0)})
    assert check_relevance_weights(tree, weights).ok
    all_zero = RelevanceWeights.from_named(tree, {"M1": (0.0, 0.0), "M2": (0.0, 0.0)})
    assert not check_relevance_weights(tree, all_zero).ok


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_weights_are_reported(golden, bad):
    tree, _ = golden
    weights = RelevanceWeights.from_named(tree, {"M1": (1.0, bad), "M2": (1.0, 1.0)})
    report = check_relevance_weights(tree, weights)
    assert report.kinds() == ["weights"]
    assert "finite" in report.violations[0].detail


def test_missing_weight_vector_is_an_input_error(golden):
    tree, _ = golden
    with pytest.raises(InputError):
        check_relevance_weights(tree, RelevanceWeights([np.ones(2)]))
    with pytest.raises(InputError):
        validate_tree(tree, RelevanceWeights([np.ones(2)]))


def test_validate_collects_every_kind():
    x, y = _vars("x", "y")
    parent = _subsystem("P", [x], cpt=np.array([[0.9, 0.3], [0.0, 1.0]]))
    child = _subsystem("C", [x, y], cpt=np.full((4, 4), 0.25))
    tree = SubsystemTree([parent, child], {1: 0}, 0.9)
    report = validate_tree(tree, RelevanceWeights([np.ones(2), np.ones(4)]))
    assert report.kinds() == ["dynamics", "normalization", "weights"]
    assert all(isinstance(str(v), str) for v in report.violations)


def test_equivalent_mdp_of_golden(golden):
    tree, _ = golden
    mdp = build_equivalent_mdp(tree)
    assert (mdp.n_states, mdp.n_actions) == (4, 4)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), np.ones((4, 4)))
    # from x=1, y=0 taking a=1, b=1 goes to x=1, y=1
    assert mdp.transition[2, 3, 3] == pytest.approx(1.0)
    # reward is 10y - 3x whatever the action
    np.testing.assert_allclose(mdp.reward[:, 0], [0.0, 10.0, -3.0, 7.0])


def test_equivalent_mdp_divides_out_shared_marginals(rng):
    tree, _ = shared_state_tree(rng)
    mdp = build_equivalent_mdp(tree)
    assert mdp.n_states == 8
    np.testing.assert_allclose(mdp.transition.sum(axis=2), np.ones((8, mdp.n_actions)))


def test_equivalent_mdp_caps_and_degenerate_marginals(golden):
    tree, _ = golden
    with pytest.raises(OracleCapError):
        build_equivalent_mdp(tree, cap=8)
    x, y = _vars("x", "y")
    stay = np.array([[1.0, 0.0], [0.0, 1.0]])
    both_stay = np.eye(4)
    degenerate = SubsystemTree([_subsystem("P", [x], cpt=stay), _subsystem("C", [x, y], cpt=both_stay)],
                               {1: 0}, 0.9)
    assert check_consistent_dynamics(degenerate).ok
    with pytest.raises(DegenerateModelError):
        build_equivalent_mdp(degenerate)


def _flawed_tree():
    """Root R with two branches; one of each violation kind."""
    r, x, y, m, c = _vars("r", "x", "y", "m", "c")
    root = _subsystem("R", [r], seed=1)
    parent = _subsystem("P", [x], [r], seed=2)
    child = _subsystem("C", [x, y], cpt=np.full((4, 4), 0.25))
    bridge = _subsystem("B", [m], cpt=np.full((2, 2), 0.7))
    leaf = _subsystem("D", [c], [r], seed=3)
    tree = SubsystemTree([root, parent, child, bridge, leaf], {1: 0, 2: 1, 3: 0, 4: 3}, 0.9)
    weights = RelevanceWeights([np.full(2, 2.0), np.full(2, 2.0), np.array([3.0, 1.0, 1.0, 1.0]),
                                np.full(2, 2.0), np.full(2, 2.0)])
    return tree, weights


def _relabel(tree, weights, order):
    """The same tree with subsystem `order[i]` moved to index i; order[0] stays the root."""
    position = {old: new for new, old in enumerate(order)}
    parents = {position[k]: position[p] for k, p in tree.parents.items()}
    return (SubsystemTree([tree[i] for i in order], parents, tree.discount),
            RelevanceWeights([weights[i] for i in order]))


def _content(report):
    return sorted((v.kind, tuple(sorted(v.subsystems)), v.variables, round(v.magnitude, 12))
                  for v in report.violations)


def test_validation_does_not_depend_on_subsystem_indices():
    tree, weights = _flawed_tree()
    expected = _content(validate_tree(tree, weights))
    assert {kind for kind, *_ in expected} == {"dynamics", "normalization", "running-intersection", "weights"}
    for rest in itertools.permutations(range(1, len(tree))):
        relabeled, reweighted = _relabel(tree, weights, (0,) + rest)
        assert _content(validate_tree(relabeled, reweighted)) == expected, rest


def _assert_marginals_recover_cpts(tree):
    mdp = build_equivalent_mdp(tree)
    states, actions = mdp.states, mdp.actions
    for j, m in enumerate(tree.subsystems):
        onto = np.zeros((states.size, m.internal.size))
        onto[np.arange(states.size), states.projection(m.internal)] = 1.0
        marginal = mdp.transition @ onto
        for s, a in itertools.product(range(states.size), range(actions.size)):
            joint = combine(assignment_at(states, s), assignment_at(actions, a))
            z = restrict(joint, m.scope).index
            np.testing.assert_allclose(marginal[s, a], m.cpt[z], atol=1e-9, err_msg=f"{m.name} at {joint}")


def test_equivalent_mdp_marginals_recover_each_cpt(golden, rng, make_random_tree):
    _assert_marginals_recover_cpts(golden[0])
    _assert_marginals_recover_cpts(shared_state_tree(rng)[0])
    for seed in range(10):
        tree, _ = make_random_tree(seed, max_joint=2 ** 8)
        _assert_marginals_recover_cpts(tree)
