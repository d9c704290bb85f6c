"""
JSON reports written by the CLI.

A report is a plain dict of lists, dicts, strings and Python floats. It is
dumped with sorted keys and Python's shortest round-trip float repr, so the
same (model, config, seed) always produce the same bytes. Timing is the
only block that varies between runs and is left out unless asked for.
"""

import json
import logging
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from jsonschema import Draft202012Validator

from .action_selection import Episode
from .config import RunConfig
from .coordinator import PlanResult
from .model import SubsystemTree
from .oracle import CentralizedSolution, ExactSolution, FeasibilityReport
from .validation import ValidationReport

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _plain(value: Any) -> Any:
    """numpy scalars and arrays, tuples and nested containers as JSON types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


def model_section(tree: SubsystemTree, path: Optional[str] = None) -> Dict[str, Any]:
    return {
        "path": path,
        "discount": tree.discount,
        "subsystems": [
            {
                "name": m.name,
                "parent": None if tree.parent(j) is None else tree[tree.parent(j)].name,
                "internal": list(m.internal.names),
                "external": list(m.external.names),
                "class": m.class_name,
            }
            for j, m in enumerate(tree.subsystems)
        ],
    }


def plan_section(tree: SubsystemTree, result: PlanResult) -> Dict[str, Any]:
    return {
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective,
        "message_bound": result.message_bound,
        "values": {
            m.name: {"internal": list(m.internal.names), "values": _plain(result.values[j])}
            for j, m in enumerate(tree.subsystems)
        },
        "messages": {
            tree[k].name: {
                "sender": tree[tree.parent(k)].name,
                "separator": list(tree.sepset(k).names),
                "values": _plain(values),
            }
            for k, values in sorted(result.messages.items())
        },
        "counters": dict(sorted(result.counters.items())),
        "master_objectives": [
            {"round": r, "objective": obj, "bounded": bounded} for r, obj, bounded in result.master_objectives
        ],
        "trace": _plain(result.trace),
    }


def episodes_section(episodes: Sequence[Episode]) -> List[Dict[str, Any]]:
    return [
        {
            "states": [a.labels for a in ep.states],
            "actions": [a.labels for a in ep.actions],
            "rewards": list(ep.rewards),
            "discounted_return": ep.discounted_return,
        }
        for ep in episodes
    ]


def comparison_section(tree: SubsystemTree, result: PlanResult, centralized: CentralizedSolution,
                       feasibility: FeasibilityReport, joint: Optional[np.ndarray] = None,
                       exact: Optional[ExactSolution] = None, exact_reason: Optional[str] = None,
                       tol: float = 1e-6) -> Dict[str, Any]:
    """
    Distributed against centralized and, when the flat MDP fits the
    oracle cap, against the exact values. `joint` holds Σ_j V_j over
    joint states for the distributed plan.
    """
    section: Dict[str, Any] = {
        "distributed_objective": result.objective,
        "centralized_objective": centralized.objective,
        "objective_delta": abs(result.objective - centralized.objective),
        "value_deltas": {
            m.name: float(np.max(np.abs(result.values[j] - centralized.values[j])))
            for j, m in enumerate(tree.subsystems)
        },
        "feasibility": {
            "max_violation": feasibility.max_violation,
            "checked": feasibility.checked,
            "sampled": feasibility.sampled,
            "worst": feasibility.worst,
        },
    }
    if exact is None:
        section["exact"] = {"available": False, "reason": exact_reason}
        return section
    section["exact"] = {
        "available": True,
        "objective": exact.objective,
        "objective_delta": abs(result.objective - exact.objective),
        "representable": abs(centralized.objective - exact.objective) <= tol,
        "joint_values": _plain(joint),
        "exact_values": _plain(exact.values),
        "max_value_delta": float(np.max(np.abs(np.asarray(joint) - exact.values))),
    }
    return section


def build_report(command: str, tree: Optional[SubsystemTree] = None, config: Optional[RunConfig] = None,
                 model_path: Optional[str] = None, validation: Optional[ValidationReport] = None,
                 plan: Optional[Mapping[str, Any]] = None, episodes: Optional[List[Dict[str, Any]]] = None,
                 comparison: Optional[Mapping[str, Any]] = None,
                 timing: Optional[Mapping[str, float]] = None) -> Dict[str, Any]:
    report: Dict[str, Any] = {"schema_version": SCHEMA_VERSION, "command": command}
    if tree is not None:
        report["model"] = model_section(tree, model_path)
    if config is not None:
        report["config"] = config.to_dict()
    if validation is not None:
        report["validation"] = validation.to_dict()
    if plan is not None:
        report["plan"] = dict(plan)
    if episodes is not None:
        report["episodes"] = episodes
    if comparison is not None:
        report["comparison"] = dict(comparison)
    if timing is not None:
        report["timing"] = dict(timing)
    return _plain(report)


def dumps_report(report: Mapping[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def load_schema() -> Dict[str, Any]:
    text = resources.files("hfmdp.schema").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(report: Mapping[str, Any]) -> List[str]:
    """Schema errors as 'path: message' strings; empty when the report is valid."""
    validator = Draft202012Validator(load_schema())
    errors = []
    for error in sorted(validator.iter_errors(report), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in error.absolute_path) or "<root>"
        errors.append(f"{where}: {error.message}")
    if errors:
        logger.warning("report fails its schema in %d places", len(errors))
    return errors
