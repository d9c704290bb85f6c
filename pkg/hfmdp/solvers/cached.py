"""
Stand-alone solver that tries known policies before running the LP.
"""

import logging
from typing import Optional, Union

import numpy as np

from ..local_planner import (AdjustedReward, FlowSolution, bellman_gap, deterministic_choice,
                             evaluate_choice, solve_standalone)
from ..model import BasicSubsystem
from ..reuse import FlowKey, ReuseCache
from .base import SubsystemSolver

logger = logging.getLogger(__name__)


class CachedPolicySolver(SubsystemSolver):
    """
    Checks every flow cached for the subsystem's class (under the same
    relevance weights) by policy evaluation. A policy whose values satisfy
    the Bellman optimality condition for the adjusted reward is returned
    without an LP; otherwise the LP runs and its flow is cached.
    """

    def __init__(self, cache: ReuseCache, key: FlowKey, tol: float = 1e-9):
        super().__init__()
        self.cache = cache
        self.key = key
        self.tol = tol

    def _try_cached(self, subsystem: BasicSubsystem, discount: float,
                    reward: np.ndarray) -> Optional[FlowSolution]:
        scale = max(1.0, float(np.max(np.abs(reward))) / max(1e-12, 1.0 - discount))
        for flow in self.cache.flows_for(self.key):
            choice = deterministic_choice(subsystem, flow)
            if choice is None:
                continue
            try:
                values = evaluate_choice(subsystem, discount, choice, reward)
            except np.linalg.LinAlgError:
                continue
            if bellman_gap(subsystem, discount, reward, values) <= self.tol * scale:
                return FlowSolution(subsystem=subsystem.name, flow=flow.copy(), values=values,
                                    objective=float(reward @ flow), reward=reward, solved_by="cache")
        return None

    def solve(self, subsystem: BasicSubsystem, discount: float, alpha: np.ndarray,
              reward: Union[AdjustedReward, np.ndarray]) -> FlowSolution:
        r = reward.values if isinstance(reward, AdjustedReward) else np.asarray(reward, dtype=float)
        hit = self._try_cached(subsystem, discount, r)
        if hit is not None:
            self.avoided += 1
            self.cache.ledger["standalone_avoided"] += 1
            logger.debug("%s: stand-alone LP avoided by a cached policy", subsystem.name)
            return hit
        self.lp_solves += 1
        solution = solve_standalone(subsystem, discount, alpha, r)
        self.cache.publish_flow(self.key, solution.flow)
        return solution
