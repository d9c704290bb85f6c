"""
Reference solutions used to check the distributed planner: the exact
Bellman LP of the flat MDP, the centralized factored LP over the whole
subsystem tree, and a global feasibility check of factored values.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import OracleCapError, SolverError
from .model import Assignment, RelevanceWeights, SubsystemTree
from .simplex import LinearProgram, LpStatus, solve
from .validation import EquivalentMdp, shared_internal, build_equivalent_mdp
from .utils import marginalize, restrict_digits

logger = logging.getLogger(__name__)

# Above this many Bellman rows the values are read off the dual (flow) LP,
# which has one row per state instead of one per state-action pair.
PRIMAL_ROW_LIMIT = 512

# Joint spaces at least this large cannot be indexed with int64.
INDEX_LIMIT = 2 ** 62


@dataclass(frozen=True)
class ExactSolution:
    values: np.ndarray
    objective: float
    flows: Optional[np.ndarray] = None
    policy: Optional[np.ndarray] = None


def joint_weights(tree: SubsystemTree, weights: RelevanceWeights) -> np.ndarray:
    """
    The α over joint internal states whose subsystem marginals are the ᾱ_j:
    Π_j ᾱ_j(x_j) / Π_{k ≠ root} ᾱ_k(x_{W_k}) along the tree.
    """
    states = tree.internal_scope
    alpha = np.ones(states.size)
    for j, m in enumerate(tree.subsystems):
        alpha *= weights[j][states.projection(m.internal)]
        parent = tree.parent(j)
        if parent is None:
            continue
        shared = shared_internal(tree, j, parent)
        marg = marginalize(weights[j], m.internal.projection(shared), shared.size)
        denominator = marg[states.projection(shared)]
        # states with zero separator weight get zero joint weight
        alpha = np.divide(alpha, denominator, out=np.zeros_like(alpha), where=denominator > 0)
    return alpha


def joint_values(tree: SubsystemTree, values: List[np.ndarray]) -> np.ndarray:
    """Σ_j V_j(x_j) for every joint internal state."""
    states = tree.internal_scope
    total = np.zeros(states.size)
    for j, m in enumerate(tree.subsystems):
        total += np.asarray(values[j], dtype=float)[states.projection(m.internal)]
    return total


def _bellman_lp(mdp: EquivalentMdp, alpha: np.ndarray) -> LinearProgram:
    n_s, n_a = mdp.n_states, mdp.n_actions
    rows = n_s * n_a
    A = np.zeros((rows, n_s))
    A[np.arange(rows), np.repeat(np.arange(n_s), n_a)] = 1.0
    A -= mdp.discount * mdp.transition.reshape(rows, n_s)
    return LinearProgram.build(c=alpha, A_ge=A, b_ge=mdp.reward.reshape(rows),
                               lower=np.full(n_s, -np.inf), upper=np.full(n_s, np.inf))


def exact_dual_flows(mdp: EquivalentMdp, alpha: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Optimal occupation flows φ[s, a] and the values from the conservation duals."""
    n_s, n_a = mdp.n_states, mdp.n_actions
    cols = n_s * n_a
    A = -mdp.discount * mdp.transition.reshape(cols, n_s).T
    A[np.repeat(np.arange(n_s), n_a), np.arange(cols)] += 1.0
    lp = LinearProgram.build(c=-mdp.reward.reshape(cols), A_eq=A, b_eq=alpha)
    sol = solve(lp)
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverError(f"flow LP of the equivalent MDP ended {sol.status.value}")
    return sol.x.reshape(n_s, n_a), -sol.dual_eq, -sol.objective


def exact_bellman_lp(mdp: EquivalentMdp, alpha: np.ndarray, cap: int = 2 ** 20) -> ExactSolution:
    """
    V* of the flat MDP by linear programming, with the greedy policy.

    Raises:
        OracleCapError: when |states| × |actions| exceeds `cap`
    """
    alpha = np.asarray(alpha, dtype=float)
    if mdp.n_states * mdp.n_actions > cap:
        raise OracleCapError(f"{mdp.n_states} x {mdp.n_actions} state-action pairs exceed the cap {cap}")
    flows = None
    if mdp.n_states * mdp.n_actions <= PRIMAL_ROW_LIMIT:
        sol = solve(_bellman_lp(mdp, alpha))
        if sol.status is not LpStatus.OPTIMAL:
            raise SolverError(f"Bellman LP ended {sol.status.value}")
        values = sol.x
    else:
        flows, values, _ = exact_dual_flows(mdp, alpha)
    return ExactSolution(values=values, objective=float(alpha @ values), flows=flows,
                         policy=greedy_policy(mdp, values))


def greedy_policy(mdp: EquivalentMdp, values: np.ndarray) -> np.ndarray:
    """argmax_a R + γ P V; the lowest action index wins ties."""
    q = mdp.reward + mdp.discount * mdp.transition @ values
    return np.argmax(q, axis=1)


def evaluate_policy(mdp: EquivalentMdp, policy: np.ndarray) -> np.ndarray:
    """Values of a deterministic policy (action index per state)."""
    policy = np.asarray(policy, dtype=np.int64)
    states = np.arange(mdp.n_states)
    transition = mdp.transition[states, policy]
    reward = mdp.reward[states, policy]
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * transition, reward)


@dataclass(frozen=True)
class CentralizedSolution:
    values: List[np.ndarray]
    messages: Dict[int, np.ndarray]
    adjustments: List[np.ndarray]
    objective: float
    lp: LinearProgram
    layout: Dict[str, slice]


def factored_lp(tree: SubsystemTree, weights: RelevanceWeights, bound: Optional[float] = None) -> CentralizedSolution:
    """Build (without solving) the monolithic factored LP; see centralized_factored_lp."""
    layout: Dict[str, slice] = {}
    offset = 0
    for j, m in enumerate(tree.subsystems):
        layout[f"V_{j}"] = slice(offset, offset + m.internal.size)
        offset += m.internal.size
    for j, m in enumerate(tree.subsystems):
        layout[f"U_{j}"] = slice(offset, offset + m.scope.size)
        offset += m.scope.size
    for k in range(1, len(tree)):
        size = tree.sepset(k).size
        layout[f"S_{k}"] = slice(offset, offset + size)
        offset += size
    n = offset

    ge_rows, ge_rhs, eq_rows = [], [], []
    for j, m in enumerate(tree.subsystems):
        v = layout[f"V_{j}"]
        u = layout[f"U_{j}"]
        block = np.zeros((m.scope.size, n))
        block[:, v] = -tree.discount * m.cpt
        block[np.arange(m.scope.size), v.start + m.state_index] += 1.0
        block[np.arange(m.scope.size), u.start + np.arange(m.scope.size)] = -1.0
        ge_rows.append(block)
        ge_rhs.append(m.reward)

        eq = np.zeros((m.scope.size, n))
        eq[np.arange(m.scope.size), u.start + np.arange(m.scope.size)] = 1.0
        for k in tree.children(j):
            s = layout[f"S_{k}"]
            eq[np.arange(m.scope.size), s.start + m.scope.projection(tree.sepset(k))] -= 1.0
        if tree.parent(j) is not None:
            s = layout[f"S_{j}"]
            eq[np.arange(m.scope.size), s.start + m.scope.projection(tree.sepset(j))] += 1.0
        eq_rows.append(eq)

    c = np.zeros(n)
    for j in range(len(tree)):
        c[layout[f"V_{j}"]] = weights[j]
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    if bound is not None:
        for k in range(1, len(tree)):
            lower[layout[f"S_{k}"]] = -bound
            upper[layout[f"S_{k}"]] = bound
    lp = LinearProgram.build(c=c, A_ge=np.vstack(ge_rows), b_ge=np.concatenate(ge_rhs),
                             A_eq=np.vstack(eq_rows), b_eq=np.zeros(sum(r.shape[0] for r in eq_rows)),
                             lower=lower, upper=upper)
    return CentralizedSolution(values=[], messages={}, adjustments=[], objective=float("nan"), lp=lp, layout=layout)


def centralized_factored_lp(tree: SubsystemTree, weights: RelevanceWeights,
                            bound: Optional[float] = None) -> CentralizedSolution:
    """
    minimize Σ_j ᾱ_j·V_j subject to, for every subsystem j and Scope
    assignment z, V_j(x) ≥ R_j(z) + U_j(z) + γ Σ_x' P_j(x'|z) V_j(x') with
    U_j = Σ_children S_k - S_j. `bound` boxes the S variables.
    """
    built = factored_lp(tree, weights, bound)
    sol = solve(built.lp)
    if sol.status is not LpStatus.OPTIMAL:
        raise SolverError(f"centralized factored LP ended {sol.status.value}")
    layout = built.layout
    values = [sol.x[layout[f"V_{j}"]].copy() for j in range(len(tree))]
    return CentralizedSolution(
        values=values,
        messages={k: sol.x[layout[f"S_{k}"]].copy() for k in range(1, len(tree))},
        adjustments=[sol.x[layout[f"U_{j}"]].copy() for j in range(len(tree))],
        objective=float(sum(weights[j] @ values[j] for j in range(len(tree)))),
        lp=built.lp,
        layout=layout,
    )


@dataclass(frozen=True)
class FeasibilityReport:
    max_violation: float
    checked: int
    sampled: bool
    worst: Optional[str] = None

    def feasible(self, tol: float = 1e-8) -> bool:
        return self.max_violation <= tol


def check_global_feasibility(tree: SubsystemTree, values: List[np.ndarray], sample_cap: int = 2 ** 16,
                             seed: int = 0) -> FeasibilityReport:
    """
    Largest violation of Σ_j V_j(x_j) ≥ R(x, a) + γ E[Σ_j V_j(x'_j)] over
    joint (x, a). The joint expectation splits into per-subsystem local
    expectations, so no flat transition model is needed. Above
    `sample_cap` joint assignments a seeded uniform sample is checked;
    only the sampled coordinates are ever materialized.
    """
    everything = tree.variables
    shape = everything.shape
    total = everything.size
    sampled = total > sample_cap
    if sampled:
        digits = _sample_digits(shape, total, sample_cap, seed)
    else:
        digits = np.unravel_index(np.arange(total, dtype=np.int64), shape)
    checked = len(digits[0])
    slack = np.zeros(checked)
    for j, m in enumerate(tree.subsystems):
        z = restrict_digits(digits, shape, m.scope.positions_in(everything))
        q = m.reward + tree.discount * m.cpt @ values[j]
        slack += q[z] - values[j][m.state_index[z]]
    worst = int(np.argmax(slack))
    violation = max(0.0, float(slack[worst]))
    worst_assignment = Assignment(everything, tuple(int(d[worst]) for d in digits))
    return FeasibilityReport(max_violation=violation, checked=checked, sampled=sampled,
                             worst=str(worst_assignment))


def _sample_digits(shape: Tuple[int, ...], total: int, size: int, seed: int) -> Tuple[np.ndarray, ...]:
    """Coordinates of `size` seeded uniform joint assignments, without building the joint space."""
    rng = np.random.default_rng(seed)
    if total < INDEX_LIMIT:
        joint = np.sort(rng.choice(total, size=size, replace=False))
        return np.unravel_index(joint, shape)
    # too many assignments for int64 indices: draw every coordinate independently
    return tuple(rng.integers(0, n, size=size, dtype=np.int64) for n in shape)


def solve_flat(tree: SubsystemTree, weights: RelevanceWeights, cap: int = 2 ** 20) -> Tuple[EquivalentMdp, ExactSolution]:
    """Build the equivalent MDP and solve it exactly under the joint relevance weights."""
    mdp = build_equivalent_mdp(tree, cap)
    return mdp, exact_bellman_lp(mdp, joint_weights(tree, weights), cap)
