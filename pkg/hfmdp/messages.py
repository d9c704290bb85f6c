"""
Messages exchanged between neighbouring subsystem agents.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InputError
from .model import Scope


@dataclass(frozen=True)
class RewardMessage:
    """Ŝ_k over the child's separator, sent parent -> child."""

    sender: int
    recipient: int
    separator: Scope
    values: np.ndarray
    round: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != self.separator.size:
            raise InputError(f"message has {values.size} entries for {self.separator!r}")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FlowMessage:
    """
    New subtree rows sent child -> parent. Each row pairs a value T with a
    flow marginal over the child's separator; rows are appended, never replaced.
    """

    sender: int
    recipient: int
    separator: Scope
    values: Tuple[float, ...]
    rows: Tuple[np.ndarray, ...]
    round: int = 0

    def __post_init__(self):
        if len(self.values) != len(self.rows):
            raise InputError("one value per flow row expected")
        for row in self.rows:
            if np.asarray(row).size != self.separator.size:
                raise InputError(f"flow row does not match {self.separator!r}")
