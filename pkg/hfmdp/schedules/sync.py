"""
Synchronous (Jacobi) schedule.
"""

from typing import List

from .base import LOCAL_PHASE, MESSAGE_PHASE, Schedule, Step


class SyncSchedule(Schedule):
    """
    Every master problem runs on the banks of the previous round, then
    every stand-alone problem runs on the messages just produced.
    """

    name = "sync"

    def round_plan(self, round_number: int) -> List[Step]:
        masters = [(j, (MESSAGE_PHASE,)) for j in range(len(self.tree)) if not self.tree.is_leaf(j)]
        locals_ = [(j, (LOCAL_PHASE,)) for j in range(len(self.tree))]
        return [masters, locals_] if masters else [locals_]
