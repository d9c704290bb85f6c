"""
Abstract base class for agent activation schedules.
"""

from abc import ABC, abstractmethod
from typing import Iterator, List, Tuple

from ..model import SubsystemTree

# One activation: an agent index and the phases it runs, in order.
Activation = Tuple[int, Tuple[str, ...]]
# A step is a batch of activations whose outgoing messages are delivered together.
Step = List[Activation]

MESSAGE_PHASE = "message"
LOCAL_PHASE = "local"
BOTH_PHASES = (MESSAGE_PHASE, LOCAL_PHASE)


class Schedule(ABC):
    """
    Decides which agents run in each round and when their messages land.
    Every agent must be activated in every round.
    """

    name = "abstract"

    def __init__(self, tree: SubsystemTree, seed: int = 0):
        self.tree = tree
        self.seed = seed

    @abstractmethod
    def round_plan(self, round_number: int) -> List[Step]:
        """
        Activations of one round.

        Args:
            round_number: 1-based round counter

        Returns:
            List of steps; messages produced in a step are delivered
            before the next step starts
        """
        pass

    def rounds(self) -> Iterator[List[Step]]:
        round_number = 0
        while True:
            round_number += 1
            yield self.round_plan(round_number)
