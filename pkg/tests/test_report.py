import json

import pytest

from hfmdp.action_selection import compute_q, simulate_episode
from hfmdp.config import RunConfig
from hfmdp.coordinator import run_planner
from hfmdp.errors import OracleCapError
from hfmdp.model import assignment_at
from hfmdp.oracle import centralized_factored_lp, check_global_feasibility, joint_values, solve_flat
from hfmdp.report import (SCHEMA_VERSION, build_report, comparison_section, dumps_report, episodes_section,
                          load_schema, plan_section, validate_report)
from hfmdp.validation import validate_tree


def _plan_report(tree, weights, config):
    result = run_planner(tree, weights, config)
    return build_report("plan", tree, config, "golden.hmdp", plan=plan_section(tree, result))


def test_plan_report_is_deterministic(golden):
    tree, weights = golden
    config = RunConfig(seed=3)
    first = dumps_report(_plan_report(tree, weights, config))
    second = dumps_report(_plan_report(tree, weights, config))
    assert first == second
    data = json.loads(first)
    assert data["schema_version"] == SCHEMA_VERSION
    assert data["plan"]["objective"] == pytest.approx(124.0)
    assert data["plan"]["messages"]["M2"]["sender"] == "M1"
    assert data["model"]["subsystems"][1]["parent"] == "M1"
    assert "timing" not in data


def test_reports_match_the_schema(golden):
    tree, weights = golden
    config = RunConfig()
    assert load_schema()["$schema"].endswith("2020-12/schema")
    validation = build_report("validate", tree, config, None, validation=validate_tree(tree, weights))
    assert validate_report(validation) == []

    result = run_planner(tree, weights, config)
    qs = compute_q(tree, result.values)
    episode = simulate_episode(tree, qs, assignment_at(tree.internal_scope, 0), 4, rng=1)
    execute = build_report("execute", tree, config, "golden.hmdp", plan=plan_section(tree, result),
                           episodes=episodes_section([episode]),
                           timing={"wall_seconds": 0.5, "cpu_seconds": 0.4, "peak_rss_mb": 80.0})
    assert validate_report(execute) == []
    assert execute["episodes"][0]["states"][0] == {"x": "0", "y": "0"}


def test_comparison_section(golden):
    tree, weights = golden
    result = run_planner(tree, weights)
    central = centralized_factored_lp(tree, weights)
    feasibility = check_global_feasibility(tree, result.values)
    _, exact = solve_flat(tree, weights)
    section = comparison_section(tree, result, central, feasibility, joint_values(tree, result.values), exact)
    assert section["objective_delta"] <= 1e-6
    assert section["exact"]["available"]
    assert section["exact"]["representable"]
    assert section["exact"]["max_value_delta"] <= 1e-6
    report = build_report("compare", tree, RunConfig(), None, plan=plan_section(tree, result), comparison=section)
    assert validate_report(report) == []

    with pytest.raises(OracleCapError) as info:
        solve_flat(tree, weights, cap=1)
    skipped = comparison_section(tree, result, central, feasibility, exact_reason=str(info.value))
    assert skipped["exact"] == {"available": False, "reason": str(info.value)}
    assert validate_report(build_report("compare", tree, comparison=skipped)) == []


def test_schema_rejects_unknown_fields(golden):
    tree, _ = golden
    report = build_report("plan", tree)
    report["surprise"] = 1
    problems = validate_report(report)
    assert problems and problems[0].startswith("<root>:")
    bad_command = build_report("launch")
    assert any("command" in p for p in validate_report(bad_command))


def test_dumps_report_refuses_nan():
    report = build_report("plan")
    report["plan"] = {"objective": float("nan")}
    with pytest.raises(ValueError):
        dumps_report(report)
    assert dumps_report({"b": 1, "a": 0.5}).startswith('{\n  "a": 0.5')
