"""
Factory for activation schedules.
"""

from typing import List

from ..config import RunConfig
from ..errors import InputError
from ..model import SubsystemTree
from .base import Schedule
from .sequential import LeavesFirstSchedule, RandomSchedule
from .sync import SyncSchedule

_SCHEDULES = {
    SyncSchedule.name: SyncSchedule,
    LeavesFirstSchedule.name: LeavesFirstSchedule,
    RandomSchedule.name: RandomSchedule,
}


def get_schedule(config: RunConfig, tree: SubsystemTree) -> Schedule:
    """
    Get the schedule named in `config`.

    Raises:
        InputError: If the schedule name is unknown
    """
    try:
        cls = _SCHEDULES[config.schedule]
    except KeyError:
        raise InputError(f"unknown schedule {config.schedule!r}; choose from {list_schedules()}") from None
    return cls(tree, seed=config.seed)


def list_schedules() -> List[str]:
    return list(_SCHEDULES)
