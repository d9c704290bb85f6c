"""
Joint action selection from factored Q-functions.

Each subsystem reads only the state variables in its own scope. An upward
pass sends, for every assignment of the action variables a child shares
with its parent, the best value the child's subtree can add; a downward
pass fixes actions from the root. Ties go to the lexicographically
smallest action assignment.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InputError, OracleCapError, ScopeError
from .model import Assignment, Scope, SubsystemTree, assignment_at, combine, restrict
from .validation import EquivalentMdp, build_equivalent_mdp

logger = logging.getLogger(__name__)

# Action values of a whole subtree, keyed like Scope orders its variables.
Completion = Dict[Tuple[int, str], int]


def compute_q(tree: SubsystemTree, values: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Q_j(z) = R_j(z) + γ Σ_x' P_j(x'|z) V_j(x') over each Scope[M_j]."""
    return [m.reward + tree.discount * m.cpt @ np.asarray(values[j], dtype=float)
            for j, m in enumerate(tree.subsystems)]


@dataclass
class SelectionStats:
    """Work done by select_action: table entries scanned and variables each subsystem read."""

    max_ops: int = 0
    observed: Dict[str, Tuple[str, ...]] = field(default_factory=dict)


def _action_scope(tree: SubsystemTree, j: int) -> Scope:
    return tree[j].scope.intersection(tree.external_scope)


def _instantiate(tree: SubsystemTree, j: int, q: np.ndarray, observation: Assignment) -> np.ndarray:
    """Q_j with the observed state variables fixed, as a vector over its action variables."""
    scope = tree[j].scope
    index: List[Union[int, slice]] = [slice(None)] * len(scope)
    for var, value in zip(observation.scope, observation.values):
        index[scope.names.index(var.name)] = value
    return np.asarray(q).reshape(scope.shape)[tuple(index)].reshape(-1)


def select_action(tree: SubsystemTree, qs: Sequence[np.ndarray], state: Assignment,
                  stats: Optional[SelectionStats] = None) -> Assignment:
    """
    The joint action maximizing Σ_j Q_j at `state` (an assignment of
    Internal[M]); returns an assignment of External[M].

    Exact ties go to the lexicographically smallest joint action in
    declaration order, the same action brute_force_action returns.
    """
    if not tree.internal_scope.issubset(state.scope):
        raise ScopeError(f"state must assign {tree.internal_scope.names}")
    actions = {j: _action_scope(tree, j) for j in range(len(tree))}
    combined: Dict[int, np.ndarray] = {}
    best: Dict[int, np.ndarray] = {}
    completions: Dict[int, List[Completion]] = {}
    for j in tree.post_order():
        observed = tree[j].scope.intersection(tree.internal_scope)
        observation = restrict(state, observed)
        if stats is not None:
            stats.observed[tree[j].name] = observed.names
        table = _instantiate(tree, j, qs[j], observation)
        for k in tree.children(j):
            shared = actions[k].intersection(actions[j])
            top = _upward(tree, k, actions, combined, best, completions, shared, stats)
            table = table + top[actions[j].projection(shared)]
        combined[j] = table
    # root: maximize over everything that is left
    root_best = _argmax_groups(combined[0], np.zeros(combined[0].size, dtype=np.int64), 1, stats,
                               lambda z: _completion(tree, 0, z, actions, completions))[1]
    chosen: Dict[int, int] = {0: int(root_best[0])}
    for j in tree.pre_order():
        parent = tree.parent(j)
        if parent is None:
            continue
        shared = actions[j].intersection(actions[parent])
        parent_action = assignment_at(actions[parent], chosen[parent])
        chosen[j] = int(best[j][restrict(parent_action, shared).index])
    parts = [assignment_at(actions[j], chosen[j]) for j in range(len(tree))]
    return restrict(combine(*parts), tree.external_scope)


def _completion(tree: SubsystemTree, k: int, z: int, actions: Dict[int, Scope],
                completions: Dict[int, List[Completion]]) -> Completion:
    """Subtree action values when M_k takes its z-th action and every child its best reply."""
    own = assignment_at(actions[k], z)
    values = {(v.index, v.name): value for v, value in zip(own.scope, own.values)}
    for c in tree.children(k):
        shared = actions[c].intersection(actions[k])
        values.update(completions[c][restrict(own, shared).index])
    return values


def _ordered(completion: Completion) -> Tuple[int, ...]:
    return tuple(completion[i] for i in sorted(completion))


def _argmax_groups(values: np.ndarray, groups: np.ndarray, n_groups: int,
                   stats: Optional[SelectionStats],
                   completion_of: Optional[Callable[[int], Completion]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-group max and the index reaching it. Exact ties keep the index whose
    subtree completion is lexicographically smallest in declaration order.
    """
    top = np.full(n_groups, -np.inf)
    arg = np.zeros(n_groups, dtype=np.int64)
    keys: List[Optional[Tuple[int, ...]]] = [None] * n_groups
    for z in range(values.size):
        g = groups[z]
        if values[z] > top[g]:
            top[g] = values[z]
            arg[g] = z
            keys[g] = None
        elif values[z] == top[g] and completion_of is not None:
            if keys[g] is None:
                keys[g] = _ordered(completion_of(int(arg[g])))
            candidate = _ordered(completion_of(z))
            if candidate < keys[g]:
                arg[g] = z
                keys[g] = candidate
    if stats is not None:
        stats.max_ops += int(values.size)
    return top, arg


def _upward(tree: SubsystemTree, k: int, actions: Dict[int, Scope], combined: Dict[int, np.ndarray],
            best: Dict[int, np.ndarray], completions: Dict[int, List[Completion]], shared: Scope,
            stats: Optional[SelectionStats]) -> np.ndarray:
    def completion_of(z: int) -> Completion:
        return _completion(tree, k, z, actions, completions)

    top, arg = _argmax_groups(combined[k], actions[k].projection(shared), shared.size, stats, completion_of)
    best[k] = arg
    completions[k] = [completion_of(int(z)) for z in arg]
    return top


def joint_q_value(tree: SubsystemTree, qs: Sequence[np.ndarray], state: Assignment, action: Assignment) -> float:
    joint = combine(state, action)
    return float(sum(qs[j][restrict(joint, m.scope).index] for j, m in enumerate(tree.subsystems)))


def brute_force_action(tree: SubsystemTree, qs: Sequence[np.ndarray], state: Assignment) -> Tuple[Assignment, float]:
    """Enumerate every joint action; the first maximizer wins."""
    actions = tree.external_scope
    best_value, best_index = -np.inf, 0
    for a in range(actions.size):
        value = joint_q_value(tree, qs, state, assignment_at(actions, a))
        if value > best_value:
            best_value, best_index = value, a
    return assignment_at(actions, best_index), best_value


def policy_table(tree: SubsystemTree, qs: Sequence[np.ndarray], cap: int = 2 ** 20) -> np.ndarray:
    """Action index (over External[M]) chosen in every joint state."""
    states = tree.internal_scope
    if states.size > cap:
        raise OracleCapError(f"{states.size} joint states exceed the cap {cap}")
    return np.array([select_action(tree, qs, assignment_at(states, s)).index for s in range(states.size)],
                    dtype=np.int64)


@dataclass(frozen=True)
class Episode:
    states: Tuple[Assignment, ...]
    actions: Tuple[Assignment, ...]
    rewards: Tuple[float, ...]
    discounted_return: float


def simulate_episode(tree: SubsystemTree, qs: Sequence[np.ndarray], start: Assignment, horizon: int,
                     rng: Union[int, np.random.Generator] = 0, mdp: Optional[EquivalentMdp] = None) -> Episode:
    """Roll the greedy factored policy forward in the equivalent MDP."""
    if horizon < 1:
        raise InputError(f"horizon must be at least 1, got {horizon}")
    rng =np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    mdp = mdp or build_equivalent_mdp(tree)
    state = restrict(start, tree.internal_scope)
    states, actions, rewards = [], [], []
    total = 0.0
    for t in range(horizon):
        action = select_action(tree, qs, state)
        s, a = state.index, action.index
        reward = float(mdp.reward[s, a])
        states.append(state)
        actions.append(action)
        rewards.append(reward)
        total += tree.discount ** t * reward
        p = np.clip(mdp.transition[s, a], 0.0, None)
        state = assignment_at(tree.internal_scope, int(rng.choice(p.size, p=p / p.sum())))
    return Episode(tuple(states), tuple(actions), tuple(rewards), total)
