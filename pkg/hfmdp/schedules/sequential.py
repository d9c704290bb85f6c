"""
Gauss-Seidel style schedules: one agent at a time, messages delivered at once.
"""

from typing import List

import numpy as np

from .base import BOTH_PHASES, Schedule, Step


class LeavesFirstSchedule(Schedule):
    """Agents in post-order, so children act before their parent in a round."""

    name = "leaves-first"

    def round_plan(self, round_number: int) -> List[Step]:
        return [[(j, BOTH_PHASES)] for j in self.tree.post_order()]


class RandomSchedule(Schedule):
    """A fresh seeded permutation of the agents every round."""

    name = "random"

    def __init__(self, tree, seed: int = 0):
        super().__init__(tree, seed)
        self.rng = np.random.default_rng(seed)

    def round_plan(self, round_number: int) -> List[Step]:
        order = self.rng.permutation(len(self.tree))
        return [[(int(j), BOTH_PHASES)] for j in order]
