"""
Consistency checks of a subsystem tree and the flat MDP it stands for.

The check_* functions never raise for a bad model; they return a
ValidationReport listing every violation found.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx
import numpy as np

from .config import RunConfig
from .errors import DegenerateModelError, InputError, OracleCapError
from .model import RelevanceWeights, Scope, SubsystemTree, assignment_at
from .utils import marginalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Violation:
    kind: str
    subsystems: Tuple[str, ...]
    variables: Tuple[str, ...] = ()
    magnitude: float = 0.0
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "subsystems": list(self.subsystems),
            "variables": list(self.variables),
            "magnitude": float(self.magnitude),
            "detail": self.detail,
        }

    def __str__(self) -> str:
        where = ", ".join(self.subsystems)
        return f"{self.kind} [{where}] {self.detail}".rstrip()


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        self.violations.extend(other.violations)
        return self

    def kinds(self) -> List[str]:
        return sorted({v.kind for v in self.violations})

    def to_dict(self) -> Dict[str, Any]:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def _running_intersection(tree: SubsystemTree, scopes: List[Scope], label: str) -> ValidationReport:
    report = ValidationReport()
    undirected = tree.graph.to_undirected(as_view=True)
    holders: Dict[str, List[int]] = {}
    for j, scope in enumerate(scopes):
        for name in scope.names:
            holders.setdefault(name, []).append(j)
    for name in sorted(holders):
        nodes = holders[name]
        if len(nodes) < 2 or nx.is_connected(undirected.subgraph(nodes)):
            continue
        for j, k in itertools.combinations(nodes, 2):
            missing = [i for i in tree.path(j, k) if name not in scopes[i]]
            if missing:
                report.violations.append(Violation(
                    kind="running-intersection",
                    subsystems=(tree[j].name, tree[k].name),
                    variables=(name,),
                    detail=f"{label}: {name} is missing on the path at "
                           f"{', '.join(tree[i].name for i in missing)}",
                ))
    return report


def check_running_intersection(tree: SubsystemTree) -> ValidationReport:
    """Checked for scopes and, separately, for internal variable sets."""
    report = _running_intersection(tree, [m.scope for m in tree.subsystems], "scope")
    return report.extend(_running_intersection(tree, [m.internal for m in tree.subsystems], "internal"))


def check_normalization(tree: SubsystemTree, tol: float = 1e-9) -> ValidationReport:
    report = ValidationReport()
    for m in tree.subsystems:
        negative = float(-np.min(m.cpt)) if m.cpt.size else 0.0
        if negative > tol:
            report.violations.append(Violation(
                kind="normalization", subsystems=(m.name,), magnitude=negative,
                detail="negative CPT entry"))
        sums = m.cpt.sum(axis=1)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        gap = float(abs(sums[worst] - 1.0))
        if gap > tol:
            report.violations.append(Violation(
                kind="normalization", subsystems=(m.name,), magnitude=gap,
                detail=f"CPT row {assignment_at(m.scope, worst)} sums to {sums[worst]!r}"))
    return report


def shared_internal(tree: SubsystemTree, j: int, k: int) -> Scope:
    return tree[j].internal.intersection(tree[k].internal)


def check_consistent_dynamics(tree: SubsystemTree, tol: float = 1e-9) -> ValidationReport:
    """
    For each tree edge whose endpoints share internal variables W, both
    CPTs must give the same next-step marginal over W for every joint
    assignment of their scopes.
    """
    report = ValidationReport()
    for k in range(1, len(tree)):
        j = tree.parent(k)
        shared = shared_internal(tree, j, k)
        if not len(shared):
            continue
        union = tree[j].scope.union(tree[k].scope)
        marg_j = tree[j].next_marginal(shared)[union.projection(tree[j].scope)]
        marg_k = tree[k].next_marginal(shared)[union.projection(tree[k].scope)]
        diff = np.abs(marg_j - marg_k)
        worst = float(diff.max())
        if worst > tol:
            z = int(np.argmax(diff.max(axis=1)))
            report.violations.append(Violation(
                kind="dynamics", subsystems=(tree[j].name, tree[k].name), variables=shared.names,
                magnitude=worst, detail=f"marginals differ by {worst!r} at {assignment_at(union, z)}"))
    return report


def check_relevance_weights(tree: SubsystemTree, weights: RelevanceWeights, tol: float = 1e-9) -> ValidationReport:
    """
    Neighbouring ᾱ must agree when marginalized onto their shared internal
    variables; with nothing shared their total masses must agree.

    Raises:
        InputError: when some subsystem has no weight vector
    """
    if len(weights) != len(tree):
        raise InputError(f"{len(weights)} weight vectors for {len(tree)} subsystems")
    report = ValidationReport()
    for j, m in enumerate(tree.subsystems):
        if weights[j].size != m.internal.size:
            report.violations.append(Violation(kind="weights", subsystems=(m.name,),
                                               detail="wrong number of weights"))
            return report
        if np.any(~np.isfinite(weights[j])):
            report.violations.append(Violation(kind="weights", subsystems=(m.name,),
                                               detail="weights must be finite"))
            return report
        if np.any(weights[j] < 0):
            report.violations.append(Violation(kind="weights", subsystems=(m.name,),
                                               magnitude=float(-np.min(weights[j])),
                                               detail="weights must be nonnegative"))
        elif not np.any(weights[j] > 0):
            report.violations.append(Violation(kind="weights", subsystems=(m.name,),
                                               detail="weights must not all be zero"))
    for k in range(1, len(tree)):
        j = tree.parent(k)
        shared = shared_internal(tree, j, k)
        marg_j = marginalize(weights[j], tree[j].internal.projection(shared), shared.size)
        marg_k = marginalize(weights[k], tree[k].internal.projection(shared), shared.size)
        gap = float(np.max(np.abs(marg_j - marg_k)))
        if gap > tol:
            report.violations.append(Violation(
                kind="weights", subsystems=(tree[j].name, tree[k].name), variables=shared.names,
                magnitude=gap, detail="relevance weight marginals disagree"))
    return report


def validate_tree(tree: SubsystemTree, weights: Optional[RelevanceWeights] = None,
                  config: Optional[RunConfig] = None) -> ValidationReport:
    config = config or RunConfig()
    report = ValidationReport()
    report.extend(check_normalization(tree, config.prob_tol))
    report.extend(check_running_intersection(tree))
    report.extend(check_consistent_dynamics(tree, config.dyn_tol))
    if weights is not None:
        report.extend(check_relevance_weights(tree, weights, config.weight_tol))
    if not report.ok:
        logger.info("validation found %d violations: %s", len(report.violations), report.kinds())
    return report


@dataclass(frozen=True)
class EquivalentMdp:
    """
    The flat MDP over states Internal[M] and actions External[M].
    `reward[s, a]`, `transition[s, a, s']`.
    """

    states: Scope
    actions: Scope
    reward: np.ndarray
    transition: np.ndarray
    discount: float

    @property
    def n_states(self) -> int:
        return self.states.size

    @property
    def n_actions(self) -> int:
        return self.actions.size


def _joint_to_state_action(tree: SubsystemTree, table: np.ndarray, trailing: Tuple[int, ...]) -> np.ndarray:
    """Reorder a table over all variables (declaration order) into [state, action, ...]."""
    everything = tree.variables
    state_axes = tree.internal_scope.positions_in(everything)
    action_axes = tree.external_scope.positions_in(everything)
    tensor = table.reshape(everything.shape + trailing)
    extra = tuple(range(len(everything), len(everything) + len(trailing)))
    tensor = np.transpose(tensor, state_axes + action_axes + extra)
    return tensor.reshape((tree.internal_scope.size, tree.external_scope.size) + trailing)


def build_equivalent_mdp(tree: SubsystemTree, cap: int = 2 ** 20) -> EquivalentMdp:
    """
    P(x' | x, a) = Π_j P_j(x'_j | z_j) / Π_{k ≠ root} P_k(x'_{W_k} | z_k),
    where W_k are the internal variables shared by k and its parent, and
    R(x, a) = Σ_j R_j(z_j).

    Raises:
        OracleCapError: when |states| × |actions| exceeds `cap`, or the
            dense transition tensor would exceed `cap` × 64 entries
        DegenerateModelError: on a zero separator marginal
    """
    states = tree.internal_scope
    actions = tree.external_scope
    pairs = states.size * actions.size
    if pairs > cap or pairs * states.size > cap * 64:
        raise OracleCapError(f"equivalent MDP has {states.size} states x {actions.size} actions, over the cap {cap}")
    everything = tree.variables
    n_joint = everything.size
    reward = np.zeros(n_joint)
    numerator = np.ones((n_joint, states.size))
    denominator = np.ones((n_joint, states.size))
    for j, m in enumerate(tree.subsystems):
        z = everything.projection(m.scope)
        xn = states.projection(m.internal)
        reward += m.reward[z]
        numerator *= m.cpt[z][:, xn]
        parent = tree.parent(j)
        if parent is None:
            continue
        shared = shared_internal(tree, j, parent)
        if not len(shared):
            continue
        marg = m.next_marginal(shared)[z][:, states.projection(shared)]
        zero = np.argwhere(marg <= 0.0)
        if zero.size:
            zi, xi = (int(v) for v in zero[0])
            raise DegenerateModelError(
                f"zero marginal of {shared.names} in {m.name} at "
                f"{assignment_at(everything, zi)} -> {assignment_at(states, xi)}")
        denominator *= marg
    transition = numerator / denominator
    mdp = EquivalentMdp(
        states=states,
        actions=actions,
        reward=_joint_to_state_action(tree, reward, ()),
        transition=_joint_to_state_action(tree, transition, (states.size,)),
        discount=tree.discount,
    )
    logger.debug("equivalent MDP: %d states, %d actions", states.size, actions.size)
    return mdp
