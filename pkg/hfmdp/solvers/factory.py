"""
Factory for the stand-alone solver used by each subsystem agent.
"""

from typing import List, Optional

from ..errors import InputError
from ..reuse import FlowKey, ReuseCache
from .base import SubsystemSolver
from .cached import CachedPolicySolver
from .lp import LpSolver


def get_subsystem_solver(kind: str = "lp", cache: Optional[ReuseCache] = None,
                         key: Optional[FlowKey] = None) -> SubsystemSolver:
    """
    Get a stand-alone solver.

    Args:
        kind: 'lp' or 'cached'
        cache: Shared reuse cache, required for 'cached'
        key: Class signature and weight digest the subsystem caches under

    Returns:
        SubsystemSolver: A fresh solver instance

    Raises:
        InputError: If the kind is unknown or a cached solver lacks its cache
    """
    if kind == "lp":
        return LpSolver()
    if kind == "cached":
        if cache is None or key is None:
            raise InputError("the cached solver needs a reuse cache and a flow key")
        return CachedPolicySolver(cache, key)
    raise InputError(f"unknown solver kind {kind!r}; choose from {list_solver_kinds()}")


def list_solver_kinds() -> List[str]:
    return ["lp", "cached"]
