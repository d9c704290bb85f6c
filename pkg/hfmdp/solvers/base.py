"""
Abstract base class for stand-alone subsystem solvers.
"""

from abc import ABC, abstractmethod
from typing import Dict, Union

import numpy as np

from ..local_planner import AdjustedReward, FlowSolution
from ..model import BasicSubsystem


class SubsystemSolver(ABC):
    """
    Abstract interface for solving one subsystem's stand-alone MDP.

    Each implementation returns an optimal flow and value function for the
    adjusted reward, and counts how often it really had to run an LP.
    """

    def __init__(self):
        self.lp_solves = 0
        self.avoided = 0

    @abstractmethod
    def solve(self, subsystem: BasicSubsystem, discount: float, alpha: np.ndarray,
              reward: Union[AdjustedReward, np.ndarray]) -> FlowSolution:
        """
        Solve the stand-alone flow LP of `subsystem`.

        Args:
            subsystem: The basic subsystem to plan for
            discount: Discount factor γ of the tree
            alpha: Relevance weights ᾱ_j over internal assignments
            reward: Adjusted reward R_j + U_j over Scope[M_j]

        Returns:
            FlowSolution with an optimal flow and V_j
        """
        pass

    def counters(self) -> Dict[str, int]:
        return {"lp_solves": self.lp_solves, "avoided": self.avoided}

    def get_solver_name(self) -> str:
        return self.__class__.__name__.replace("Solver", "").lower()
