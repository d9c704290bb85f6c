"""
Stand-alone subsystem solvers.
"""

from .base import SubsystemSolver
from .factory import get_subsystem_solver, list_solver_kinds

__all__ = ["SubsystemSolver", "get_subsystem_solver", "list_solver_kinds"]
