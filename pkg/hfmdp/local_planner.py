"""
Stand-alone planning for one basic subsystem: the reward adjusted by
the messages around it, its flow LP, and the bank of local policies
(value and separator marginals) that the message LP works from.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import SolverError
from .model import BasicSubsystem, Scope
from .simplex import LinearProgram, LpStatus, solve
from .utils import marginalize

logger = logging.getLogger(__name__)

OWN = "own"
SeparatorKey = Union[str, int]


@dataclass(frozen=True)
class AdjustedReward:
    """R_j + U_j with U_j = Σ_children Ŝ_k - Ŝ_j, over Scope[M_j]."""

    base: np.ndarray
    adjustment: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.base + self.adjustment


@dataclass(frozen=True)
class FlowSolution:
    """
    An optimal visitation flow φ(x, a) of the stand-alone problem, indexed
    by Scope assignment, and the matching value function V_j.
    """

    subsystem: str
    flow: np.ndarray
    values: np.ndarray
    objective: float
    reward: np.ndarray
    solved_by: str = "lp"
    iterations: int = 0

    def per_state(self, subsystem: BasicSubsystem) -> np.ndarray:
        """Flow summed over actions: total discounted visits of each internal state."""
        return marginalize(self.flow, subsystem.state_index, subsystem.internal.size)


class SubsystemView:
    """A subsystem together with its own and its children's separators."""

    def __init__(self, subsystem: BasicSubsystem, own_separator: Scope,
                 child_separators: Optional[Mapping[int, Scope]] = None):
        self.subsystem = subsystem
        self.separators: Dict[SeparatorKey, Scope] = {OWN: own_separator}
        for k, sep in (child_separators or {}).items():
            self.separators[k] = sep
        self.projections = {key: subsystem.scope.projection(sep) for key, sep in self.separators.items()}

    @property
    def children(self) -> List[int]:
        return [k for k in self.separators if k != OWN]

    def expand(self, key: SeparatorKey, values: np.ndarray) -> np.ndarray:
        """Lift a separator table to Scope[M_j]."""
        return np.asarray(values, dtype=float)[self.projections[key]]

    def marginal(self, key: SeparatorKey, flow: np.ndarray) -> np.ndarray:
        return marginalize(flow, self.projections[key], self.separators[key].size)

    def adjusted_reward(self, own_message: Optional[np.ndarray] = None,
                        child_messages: Optional[Mapping[int, np.ndarray]] = None) -> AdjustedReward:
        return adjusted_reward(self, own_message, child_messages)


def adjusted_reward(view: SubsystemView, own_message: Optional[np.ndarray] = None,
                    child_messages: Optional[Mapping[int, np.ndarray]] = None) -> AdjustedReward:
    """
    Missing messages count as zero. The root's separator is empty, so its
    own message is the constant 0.
    """
    subsystem = view.subsystem
    adjustment = np.zeros(subsystem.scope.size)
    for k, values in (child_messages or {}).items():
        adjustment += view.expand(k, values)
    if own_message is not None:
        adjustment -= view.expand(OWN, own_message)
    return AdjustedReward(base=subsystem.reward, adjustment=adjustment)


def conservation_matrix(subsystem: BasicSubsystem, discount: float) -> np.ndarray:
    """
    Rows are next-step internal states x', columns Scope assignments z:
    [state(z) = x'] - γ P(x' | z).
    """
    matrix = -discount * subsystem.cpt.T.copy()
    matrix[subsystem.state_index, np.arange(subsystem.scope.size)] += 1.0
    return matrix


def conservation_residual(subsystem: BasicSubsystem, discount: float, alpha: np.ndarray,
                          flow: np.ndarray) -> float:
    return float(np.max(np.abs(conservation_matrix(subsystem, discount) @ flow - alpha)))


def standalone_lp(subsystem: BasicSubsystem, discount: float, alpha: np.ndarray,
                  reward: np.ndarray) -> LinearProgram:
    names = [f"phi_{z}" for z in range(subsystem.scope.size)]
    return LinearProgram.build(
        c=-np.asarray(reward, dtype=float),
        A_eq=conservation_matrix(subsystem, discount),
        b_eq=np.asarray(alpha, dtype=float),
        names=names,
    )


def solve_standalone(subsystem: BasicSubsystem, discount: float, alpha: np.ndarray,
                     reward: Union[AdjustedReward, np.ndarray]) -> FlowSolution:
    """
    Maximize Σ (R+U)·φ over flows satisfying conservation with
    initial weights ᾱ_j. V_j is read off the conservation duals.
    """
    r = reward.values if isinstance(reward, AdjustedReward) else np.asarray(reward, dtype=float)
    lp = standalone_lp(subsystem, discount, alpha, r)
    sol = solve(lp)
    if sol.status is not LpStatus.OPTIMAL:
        # the flow polytope of a discounted MDP is nonempty and bounded
        raise SolverError(f"{subsystem.name}: stand-alone LP ended {sol.status.value}")
    flow = np.maximum(sol.x, 0.0)
    values = -sol.dual_eq
    logger.debug("%s: stand-alone objective %.6g after %d pivots", subsystem.name, -sol.objective,
                 sol.iterations)
    return FlowSolution(subsystem=subsystem.name, flow=flow, values=values, objective=float(r @ flow),
                        reward=r, solved_by="lp", iterations=sol.iterations)


def local_value_entry(flow: Union[FlowSolution, np.ndarray], reward: np.ndarray) -> float:
    """L = R_j·φ under the original, unadjusted reward."""
    phi = flow.flow if isinstance(flow, FlowSolution) else flow
    return float(np.asarray(reward, dtype=float) @ phi)


def marginalize_flow(flow: Union[FlowSolution, np.ndarray], separator: Scope, scope: Scope) -> np.ndarray:
    phi = flow.flow if isinstance(flow, FlowSolution) else flow
    return marginalize(phi, scope.projection(separator), separator.size)


def deterministic_choice(subsystem: BasicSubsystem, flow: np.ndarray, tol: float = 1e-12) -> Optional[np.ndarray]:
    """
    The Scope assignment each internal state's flow goes through, or None
    when some state has no flow or splits it across actions.
    """
    n_states = subsystem.internal.size
    choice = np.full(n_states, -1, dtype=np.int64)
    for z in np.flatnonzero(flow > tol):
        x = subsystem.state_index[z]
        if choice[x] >= 0:
            return None
        choice[x] = z
    if np.any(choice < 0):
        return None
    return choice


def evaluate_choice(subsystem: BasicSubsystem, discount: float, choice: np.ndarray,
                    reward: np.ndarray) -> np.ndarray:
    """Values of a deterministic local policy by a linear solve."""
    n_states = subsystem.internal.size
    transition = subsystem.cpt[choice]
    return np.linalg.solve(np.eye(n_states) - discount * transition, np.asarray(reward)[choice])


def bellman_gap(subsystem: BasicSubsystem, discount: float, reward: np.ndarray, values: np.ndarray) -> float:
    """max over (x, a) of Q(x, a) - V(x); zero or below means V is optimal."""
    q = np.asarray(reward) + discount * subsystem.cpt @ values
    return float(np.max(q - values[subsystem.state_index]))


class LocalPolicyBank:
    """
    Local policies found so far for one subsystem, kept as the value L
    under the original reward and the flow marginal on each separator.
    Rows are only ever appended.
    """

    def __init__(self, view: SubsystemView, tol: float = 1e-9):
        self.view = view
        self.tol = tol
        self.values: List[float] = []
        self.rows: Dict[SeparatorKey, List[np.ndarray]] = {key: [] for key in view.separators}
        self.flows: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.values)

    def matrix(self, key: SeparatorKey) -> np.ndarray:
        size = self.view.separators[key].size
        if not self.values:
            return np.zeros((0, size))
        return np.vstack(self.rows[key])

    @property
    def value_vector(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def _signature(self, value: float, marginals: Mapping[SeparatorKey, np.ndarray]) -> np.ndarray:
        return np.concatenate([[value]] + [marginals[key] for key in self.view.separators])

    def contains(self, value: float, marginals: Mapping[SeparatorKey, np.ndarray]) -> bool:
        candidate = self._signature(value, marginals)
        scale = max(1.0, float(np.max(np.abs(candidate))))
        for i, existing in enumerate(self.values):
            row = self._signature(existing, {key: self.rows[key][i] for key in self.view.separators})
            if float(np.max(np.abs(row - candidate))) <= self.tol * scale:
                return True
        return False

    def add_flow(self, flow: np.ndarray) -> bool:
        """Append a flow's row unless a duplicate is already banked."""
        flow = np.asarray(flow, dtype=float)
        value = local_value_entry(flow, self.view.subsystem.reward)
        marginals = {key: self.view.marginal(key, flow) for key in self.view.separators}
        if self.contains(value, marginals):
            return False
        self.values.append(value)
        for key, row in marginals.items():
            self.rows[key].append(row)
        self.flows.append(flow)
        return True


def record_policy(bank: LocalPolicyBank, flow: Union[FlowSolution, np.ndarray]) -> Tuple[LocalPolicyBank, bool]:
    phi = flow.flow if isinstance(flow, FlowSolution) else flow
    changed = bank.add_flow(phi)
    return bank, changed
