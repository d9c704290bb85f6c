"""
Stand-alone solver that always runs the flow LP.
"""

from typing import Union

import numpy as np

from ..local_planner import AdjustedReward, FlowSolution, solve_standalone
from ..model import BasicSubsystem
from .base import SubsystemSolver


class LpSolver(SubsystemSolver):
    """Runs the simplex solver on every request."""

    def solve(self, subsystem: BasicSubsystem, discount: float, alpha: np.ndarray,
              reward: Union[AdjustedReward, np.ndarray]) -> FlowSolution:
        self.lp_solves += 1
        return solve_standalone(subsystem, discount, alpha, reward)
