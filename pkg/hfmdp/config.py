"""
Run configuration shared by the planner, the oracles and the CLI.
"""

from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Optional

from .errors import InputError

SCHEDULES = ("sync", "leaves-first", "random")
WEIGHT_CONVENTIONS = ("ones", "normalized")


@dataclass(frozen=True)
class RunConfig:
    conv_tol: float = 1e-7
    feas_tol: float = 1e-8
    dup_tol: float = 1e-9
    prob_tol: float = 1e-9
    dyn_tol: float = 1e-9
    weight_tol: float = 1e-9
    message_bound: Optional[float] = None
    max_box_doublings: int = 6
    max_iters: int = 1000
    schedule: str = "sync"
    seed: int = 0
    reuse: bool = False
    oracle_cap: int = 2 ** 20
    sample_cap: int = 2 ** 16
    weights: Optional[str] = None

    def validate(self) -> "RunConfig":
        for name in ("conv_tol", "feas_tol", "dup_tol", "prob_tol", "dyn_tol", "weight_tol"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.message_bound is not None and not self.message_bound > 0:
            raise InputError("--message-bound must be positive")
        if self.max_iters < 1 or self.oracle_cap < 1 or self.sample_cap < 1:
            raise InputError("iteration and size caps must be at least 1")
        if self.max_box_doublings < 0:
            raise InputError("max_box_doublings cannot be negative")
        if self.schedule not in SCHEDULES:
            raise InputError(f"unknown schedule {self.schedule!r}; choose from {', '.join(SCHEDULES)}")
        if self.weights is not None and self.weights not in WEIGHT_CONVENTIONS:
            raise InputError(f"unknown weights convention {self.weights!r}")
        return self

    @classmethod
    def from_args(cls, args: Any) -> "RunConfig":
        """Build from an argparse namespace; flags a subcommand lacks keep their defaults."""
        values: Dict[str, Any] = {}
        mapping = {
            "tol": "conv_tol",
            "message_bound": "message_bound",
            "max_iters": "max_iters",
            "schedule": "schedule",
            "seed": "seed",
            "oracle_cap": "oracle_cap",
            "weights": "weights",
        }
        for flag, field_name in mapping.items():
            value = getattr(args, flag, None)
            if value is not None:
                values[field_name] = value
        reuse = getattr(args, "reuse", None)
        if reuse is not None:
            values["reuse"] = reuse in (True, "on")
        return cls(**values).validate()

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes).validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
