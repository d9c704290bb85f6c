"""
Exception hierarchy for hfmdp.

Every error carries the process exit code the CLI should return for it.
"""

from typing import Any, Optional, Sequence


class HfmdpError(Exception):
    """Base class for all hfmdp failures."""

    exit_code = 1


class InputError(HfmdpError):
    """Malformed arguments handed to a library function."""


class ScopeError(InputError):
    """A scope operation was asked for variables outside its scope."""


class StructureError(HfmdpError):
    """Parent maps or hierarchical groups that do not form a tree."""

    exit_code = 3


class ModelParseError(HfmdpError):
    """Syntax or content error in a model file, with a source location."""

    exit_code = 2

    def __init__(self, message: str, line: int = 0, column: int = 0, path: Optional[str] = None):
        self.line = line
        self.column = column
        self.path = path
        where = f"{path or '<model>'}:{line}:{column}"
        super().__init__(f"{where}: {message}")


class ValidationError(HfmdpError):
    """A subsystem tree failed its consistency checks."""

    exit_code = 3

    def __init__(self, message: str, report: Any = None):
        self.report = report
        super().__init__(message)


class DegenerateModelError(ValidationError):
    """The equivalent MDP would need a division by a zero separator marginal."""


class LpInputError(InputError):
    """A linear program with inconsistent dimensions or non-finite data."""


class SolverError(HfmdpError):
    """The simplex solver gave up (iteration cap) or failed internally."""


class NotReadyError(HfmdpError):
    """A message LP cannot be built yet because a policy bank is empty."""


class NonConvergenceError(HfmdpError):
    """The planner hit its iteration cap or stayed on its message box."""

    exit_code = 4

    def __init__(self, message: str, trace: Sequence[dict] = (), active_bounds: Sequence[Any] = ()):
        self.trace = list(trace)
        self.active_bounds = list(active_bounds)
        super().__init__(message)


class OracleCapError(HfmdpError):
    """An exact oracle refused an instance above its size cap."""

    exit_code = 5


class ReuseError(HfmdpError):
    """Rows offered for reuse between subtrees that are not equivalent."""


class CacheFormatError(HfmdpError):
    """A persisted flow cache with an unknown format or version."""
