import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .action_selection import compute_q, simulate_episode
from .config import SCHEDULES, WEIGHT_CONVENTIONS, RunConfig
from .coordinator import PlanResult, run_planner
from .errors import HfmdpError, InputError, OracleCapError, ValidationError
from .model import Assignment, RelevanceWeights, SubsystemTree, WeightsSpec, assignment_at
from .oracle import centralized_factored_lp, check_global_feasibility, joint_values, solve_flat
from .parsers import load_model
from .report import (build_report, comparison_section, dumps_report, episodes_section, plan_section,
                     validate_report)
from .reuse import ReuseCache
from .utils import configure_logging, resource_delta, resource_snapshot
from .validation import build_equivalent_mdp, validate_tree

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hfmdp",
        description="hfmdp: distributed planning for factored MDPs built from trees of subsystems")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="Model file (.hmdp)")
    common.add_argument("--out", default=None, help="Write the JSON report here instead of stdout")
    common.add_argument("--weights", choices=WEIGHT_CONVENTIONS, default=None,
                        help="Override the relevance-weight convention of the model file")
    common.add_argument("--timing", action="store_true",
                        help="Add wall/CPU time and memory to the report (makes it run-dependent)")

    planning = argparse.ArgumentParser(add_help=False)
    planning.add_argument("--seed", type=int, default=0, help="Seed for the random schedule and for episodes")
    planning.add_argument("--schedule", choices=SCHEDULES, default="sync", help="Agent activation order")
    planning.add_argument("--max-iters", type=int, default=1000, help="Round cap before giving up")
    planning.add_argument("--tol", type=float, default=1e-7, help="Message change that counts as progress")
    planning.add_argument("--message-bound", type=float, default=None,
                          help="Initial box on message entries (default: derived from the rewards)")
    planning.add_argument("--reuse", choices=("on", "off"), default="off",
                          help="Share policies between subsystems of the same class")
    planning.add_argument("--cache", default=None, help="Flow cache file to load before and save after the run")
    planning.add_argument("--dump-lps", default=None, metavar="DIR", help="Write every message LP to DIR")
    planning.add_argument("--oracle-cap", type=int, default=2 ** 20,
                          help="Largest flat state-action space the exact oracles accept")
    planning.add_argument("--live", action="store_true", help="Show a live dashboard while planning")
    planning.add_argument("--color", type=int, default=2, help="Dashboard color (0~8)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="Check a model for consistency")
    sub.add_parser("plan", parents=[common, planning], help="Run the distributed planner")
    execute = sub.add_parser("execute", parents=[common, planning], help="Plan, then simulate the policy")
    execute.add_argument("--horizon", type=int, default=20, help="Steps per episode")
    execute.add_argument("--episodes", type=int, default=1, help="Number of episodes")
    execute.add_argument("--start", default=None,
                         help="Start state as var=value,... (default: first value of every variable)")
    sub.add_parser("compare", parents=[common, planning], help="Plan and compare against the exact oracles")
    return parser


def _load(args) -> Tuple[SubsystemTree, RelevanceWeights]:
    model = load_model(args.model)
    tree, weights = model.build()
    if args.weights is not None:
        weights = WeightsSpec(args.weights).build(tree)
    logger.info("loaded %s: %d subsystems", args.model, len(tree))
    return tree, weights


def _write(report: dict, out: Optional[str]) -> None:
    problems = validate_report(report)
    if problems:
        raise HfmdpError("report does not match its schema: " + "; ".join(problems[:3]))
    text = dumps_report(report)
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)


def _validated(args, config: RunConfig) -> Tuple[SubsystemTree, RelevanceWeights]:
    tree, weights = _load(args)
    report = validate_tree(tree, weights, config)
    if not report.ok:
        for violation in report.violations:
            print(f"  {violation}", file=sys.stderr)
        raise ValidationError(f"{args.model} failed validation: {', '.join(report.kinds())}", report)
    return tree, weights


def _plan(args, tree: SubsystemTree, weights: RelevanceWeights, config: RunConfig) -> PlanResult:
    cache = None
    if config.reuse:
        cache = ReuseCache.load(args.cache, config.dup_tol) if args.cache and os.path.exists(args.cache) \
            else ReuseCache(config.dup_tol)
    elif args.cache:
        logger.warning("--cache has no effect without --reuse on")
    dashboard = None
    if args.live:
        from .dashboard import PlanDashboard
        dashboard = PlanDashboard(tree, color=args.color)
    try:
        result = run_planner(tree, weights, config, cache=cache, observer=dashboard, dump_dir=args.dump_lps)
    finally:
        if dashboard is not None:
            dashboard.close()
    if cache is not None and args.cache:
        cache.save(args.cache)
    return result


def _start_state(tree: SubsystemTree, text: Optional[str]) -> Assignment:
    states = tree.internal_scope
    if not text:
        return assignment_at(states, 0)
    labels = {}
    for part in text.split(","):
        name, sep, value = part.partition("=")
        if not sep:
            raise InputError(f"--start expects var=value pairs, got {part!r}")
        labels[name.strip()] = value.strip()
    unknown = [n for n in labels if n not in states]
    if unknown:
        raise InputError(f"--start names variables that are not internal: {unknown}")
    return Assignment.from_labels(states, labels)


def cmd_validate(args) -> int:
    start = resource_snapshot()
    config = RunConfig()
    tree, weights = _load(args)
    report = validate_tree(tree, weights, config)
    timing = resource_delta(start) if args.timing else None
    _write(build_report("validate", tree, config, args.model, validation=report, timing=timing), args.out)
    if report.ok:
        print(f"{args.model}: consistent", file=sys.stderr)
        return 0
    for violation in report.violations:
        print(f"  {violation}", file=sys.stderr)
    return ValidationError.exit_code


def cmd_plan(args) -> int:
    start = resource_snapshot()
    config = RunConfig.from_args(args)
    tree, weights = _validated(args, config)
    result = _plan(args, tree, weights, config)
    timing = resource_delta(start) if args.timing else None
    _write(build_report("plan", tree, config, args.model, plan=plan_section(tree, result), timing=timing),
           args.out)
    print(f"converged in {result.iterations} rounds, objective {result.objective:.10g}", file=sys.stderr)
    return 0


def cmd_execute(args) -> int:
    if args.horizon < 1 or args.episodes < 1:
        raise InputError("--horizon and --episodes must be at least 1")
    start = resource_snapshot()
    config = RunConfig.from_args(args)
    tree, weights = _validated(args, config)
    result = _plan(args, tree, weights, config)
    qs = compute_q(tree, result.values)
    mdp = build_equivalent_mdp(tree, config.oracle_cap)
    rng = np.random.default_rng(config.seed)
    state = _start_state(tree, args.start)
    episodes = [simulate_episode(tree, qs, state, args.horizon, rng, mdp) for _ in range(args.episodes)]
    timing = resource_delta(start) if args.timing else None
    _write(build_report("execute", tree, config, args.model, plan=plan_section(tree, result),
                        episodes=episodes_section(episodes), timing=timing), args.out)
    mean = float(np.mean([e.discounted_return for e in episodes]))
    print(f"{len(episodes)} episodes, mean discounted return {mean:.6g}", file=sys.stderr)
    return 0


def cmd_compare(args) -> int:
    start = resource_snapshot()
    config = RunConfig.from_args(args)
    tree, weights = _validated(args, config)
    result = _plan(args, tree, weights, config)
    centralized = centralized_factored_lp(tree, weights)
    feasibility = check_global_feasibility(tree, result.values, config.sample_cap, config.seed)
    exact, joint, reason = None, None, None
    try:
        _, exact = solve_flat(tree, weights, config.oracle_cap)
        joint = joint_values(tree, result.values)
    except OracleCapError as e:
        reason = str(e)
        logger.info("exact oracle skipped: %s", reason)
    comparison = comparison_section(tree, result, centralized, feasibility, joint, exact, reason)
    timing = resource_delta(start) if args.timing else None
    _write(build_report("compare", tree, config, args.model, plan=plan_section(tree, result),
                        comparison=comparison, timing=timing), args.out)
    print(f"objective delta to centralized: {comparison['objective_delta']:.3g}", file=sys.stderr)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "plan": cmd_plan,
    "execute": cmd_execute,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        return COMMANDS[args.command](args)
    except HfmdpError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nStopping...", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
