"""
Agent activation schedules for the coordinator.
"""

from .base import BOTH_PHASES, LOCAL_PHASE, MESSAGE_PHASE, Schedule
from .factory import get_schedule, list_schedules

__all__ = ["Schedule", "get_schedule", "list_schedules", "MESSAGE_PHASE", "LOCAL_PHASE", "BOTH_PHASES"]
