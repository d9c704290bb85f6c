"""
Distributed planning over a subsystem tree.

One agent per basic subsystem. An agent keeps a bank of its own local
policies and, for every child, a bank of subtree policies the child has
reported. Non-leaf agents repeatedly solve a small master ("message") LP
that prices their children's separators, send the resulting reward
messages down, and report mixtures of their policies up as new subtree
rows. Leaves only solve their stand-alone problem. The run stops when a
whole round passes without any message, bank row or pending work.
"""

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import RunConfig
from .errors import HfmdpError, NonConvergenceError, NotReadyError
from .local_planner import OWN, FlowSolution, LocalPolicyBank, SubsystemView
from .messages import FlowMessage, RewardMessage
from .model import RelevanceWeights, Scope, SubsystemTree
from .reuse import ReuseCache, class_signature, share_flows, share_subtree_rows, subtree_signatures
from .schedules import LOCAL_PHASE, MESSAGE_PHASE, get_schedule
from .simplex import LinearProgram, LpStatus, solve, write_lp
from .solvers import SubsystemSolver, get_subsystem_solver
from .utils import TRACE_LOGGER, max_abs_diff

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger(TRACE_LOGGER)

Message = Union[RewardMessage, FlowMessage]

BOUND_DUAL_TOL = 1e-9


def default_message_bound(tree: SubsystemTree) -> float:
    """10 × Σ_j max|R_j| / (1 - γ): far above any message an optimal solution needs."""
    total = sum(float(np.max(np.abs(m.reward))) for m in tree.subsystems)
    return 10.0 * max(total, 1.0) / (1.0 - tree.discount)


class SubtreePolicyBank:
    """Subtree rows (T, Φ) reported by one child, append-only and deduplicated."""

    def __init__(self, separator: Scope, tol: float = 1e-9):
        self.separator = separator
        self.tol = tol
        self.values: List[float] = []
        self.rows: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.values)

    def add(self, value: float, row: np.ndarray) -> bool:
        row = np.asarray(row, dtype=float).reshape(-1)
        candidate = np.concatenate([[value], row])
        scale = max(1.0, float(np.max(np.abs(candidate))))
        for t, r in zip(self.values, self.rows):
            if float(np.max(np.abs(np.concatenate([[t], r]) - candidate))) <= self.tol * scale:
                return False
        self.values.append(float(value))
        self.rows.append(row)
        return True

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.separator.size))
        return np.vstack(self.rows)

    @property
    def value_vector(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class MessageLp:
    """
    Master LP of one node. Variables are [θ_j, θ_k for each child, S_k
    for each child]; rows are the local bank rows followed by each child's
    subtree rows.
    """

    lp: LinearProgram
    node: int
    children: Tuple[int, ...]
    s_slices: Mapping[int, slice]
    local_rows: slice
    child_rows: Mapping[int, slice]

    def boxed(self, bound: float) -> LinearProgram:
        lower = self.lp.lower.copy()
        upper = self.lp.upper.copy()
        for sl in self.s_slices.values():
            lower[sl] = -bound
            upper[sl] = bound
        return self.lp.with_bounds(lower, upper)


@dataclass(frozen=True)
class MessageLpSolution:
    status: LpStatus
    bounded: bool
    objective: float
    messages: Mapping[int, np.ndarray]
    p_local: np.ndarray
    p_children: Mapping[int, np.ndarray]
    active_bounds: Tuple[Tuple[int, int, str], ...] = ()
    ray: Optional[Mapping[int, np.ndarray]] = None
    solves: int = 1


def build_message_lp(j: int, local_bank: LocalPolicyBank, child_banks: Mapping[int, SubtreePolicyBank],
                     own_message: Optional[np.ndarray]) -> MessageLp:
    """
    Raises NotReadyError while the local bank or any child bank is still
    empty; the node simply skips its master step then.
    """
    if not len(local_bank):
        raise NotReadyError(f"node {j}: local bank is empty")
    children = tuple(sorted(child_banks))
    for k in children:
        if not len(child_banks[k]):
            raise NotReadyError(f"node {j}: no subtree rows from child {k} yet")

    n_theta = 1 + len(children)
    s_slices: Dict[int, slice] = {}
    offset = n_theta
    for k in children:
        size = child_banks[k].separator.size
        s_slices[k] = slice(offset, offset + size)
        offset += size
    n_vars = offset

    n_local = len(local_bank)
    n_child = {k: len(child_banks[k]) for k in children}
    n_rows = n_local + sum(n_child.values())
    A = np.zeros((n_rows, n_vars))
    b = np.zeros(n_rows)

    A[:n_local, 0] = 1.0
    for k in children:
        A[:n_local, s_slices[k]] = -local_bank.matrix(k)
    b[:n_local] = local_bank.value_vector
    if own_message is not None and own_message.size:
        b[:n_local] -= local_bank.matrix(OWN) @ own_message

    child_rows: Dict[int, slice] = {}
    row = n_local
    for i, k in enumerate(children):
        count = n_child[k]
        child_rows[k] = slice(row, row + count)
        A[row:row + count, 1 + i] = 1.0
        A[row:row + count, s_slices[k]] = child_banks[k].matrix()
        b[row:row + count] = child_banks[k].value_vector
        row += count

    c = np.zeros(n_vars)
    c[:n_theta] = 1.0
    names = [f"theta_{j}"] + [f"theta_{k}" for k in children]
    for k in children:
        names += [f"S_{k}_{z}" for z in range(s_slices[k].stop - s_slices[k].start)]
    row_names = [f"local_{i}" for i in range(n_local)]
    for k in children:
        row_names += [f"subtree_{k}_{r}" for r in range(n_child[k])]
    lp = LinearProgram.build(c=c, A_ge=A, b_ge=b, lower=np.full(n_vars, -np.inf),
                             upper=np.full(n_vars, np.inf), names=names, row_names=row_names)
    return MessageLp(lp=lp, node=j, children=children, s_slices=s_slices,
                     local_rows=slice(0, n_local), child_rows=child_rows)


def _mixture(duals: np.ndarray) -> np.ndarray:
    p = np.maximum(duals, 0.0)
    total = p.sum()
    return p / total if total > 0 else p


def solve_message_lp(mlp: MessageLp, bound: float) -> MessageLpSolution:
    """
    Solve without box bounds first. When that is unbounded, keep the
    certificate ray and re-solve with every S entry in [-bound, bound].
    """
    sol = solve(mlp.lp)
    ray = None
    solves = 1
    if sol.status is LpStatus.UNBOUNDED:
        ray = {k: sol.ray[sl].copy() for k, sl in mlp.s_slices.items()}
        sol = solve(mlp.boxed(bound))
        solves = 2
    if sol.status is not LpStatus.OPTIMAL:
        raise HfmdpError(f"message LP of node {mlp.node} ended {sol.status.value}")

    active: List[Tuple[int, int, str]] = []
    for k, sl in mlp.s_slices.items():
        for z, idx in enumerate(range(sl.start, sl.stop)):
            if sol.upper_dual[idx] > BOUND_DUAL_TOL:
                active.append((k, z, "upper"))
            if sol.lower_dual[idx] > BOUND_DUAL_TOL:
                active.append((k, z, "lower"))
    duals = sol.dual_ge
    return MessageLpSolution(
        status=LpStatus.UNBOUNDED if ray is not None else LpStatus.OPTIMAL,
        bounded=ray is None and not active,
        objective=float(sol.objective),
        messages={k: sol.x[sl].copy() for k, sl in mlp.s_slices.items()},
        p_local=_mixture(duals[mlp.local_rows]),
        p_children={k: _mixture(duals[sl]) for k, sl in mlp.child_rows.items()},
        active_bounds=tuple(active),
        ray=ray,
        solves=solves,
    )


def subtree_statistics(solution: MessageLpSolution, local_bank: LocalPolicyBank,
                       child_banks: Mapping[int, SubtreePolicyBank]) -> Tuple[float, np.ndarray]:
    """
    Value and own-separator flow of the mixed subtree policy chosen by the
    master's duals: T = p_j·L + Σ_k p_k·T_k, Φ = p_j·Φ_jj.
    """
    value = float(solution.p_local @ local_bank.value_vector)
    for k, p in solution.p_children.items():
        value += float(p @ child_banks[k].value_vector)
    row = solution.p_local @ local_bank.matrix(OWN)
    return value, row


class SubsystemAgent:
    """The planner state owned by one subsystem."""

    def __init__(self, tree: SubsystemTree, j: int, alpha: np.ndarray, solver: SubsystemSolver,
                 config: RunConfig, cache: Optional[ReuseCache] = None, flow_key=None,
                 subtree_signature=None):
        self.index = j
        self.subsystem = tree[j]
        self.name = self.subsystem.name
        self.discount = tree.discount
        self.alpha = alpha
        self.parent = tree.parent(j)
        self.children = tree.children(j)
        self.solver = solver
        self.config = config
        self.cache = cache
        self.flow_key = flow_key
        self.subtree_signature = subtree_signature

        self.separator = tree.sepset(j)
        self.view = SubsystemView(self.subsystem, self.separator, {k: tree.sepset(k) for k in self.children})
        self.local_bank = LocalPolicyBank(self.view, config.dup_tol)
        self.child_banks = {k: SubtreePolicyBank(tree.sepset(k), config.dup_tol) for k in self.children}
        self.reported = SubtreePolicyBank(self.separator, config.dup_tol)

        self.own_message = np.zeros(self.separator.size)
        self.child_messages = {k: np.zeros(tree.sepset(k).size) for k in self.children}
        self.inbox: List[Message] = []
        self.dirty_local = True
        self.dirty_master = False
        self.last_master: Optional[MessageLpSolution] = None
        self.last_flow: Optional[FlowSolution] = None
        self._last_inputs: Optional[np.ndarray] = None
        self.counters: Counter = Counter()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_root(self) -> bool:
        return self.parent is None

    @property
    def idle(self) -> bool:
        return not (self.inbox or self.dirty_local or (self.dirty_master and not self.is_leaf))

    def deliver(self, message: Message) -> None:
        self.inbox.append(message)

    def absorb(self) -> None:
        for message in self.inbox:
            if isinstance(message, RewardMessage):
                self.own_message = message.values.copy()
                self.dirty_local = True
                if not self.is_leaf:
                    self.dirty_master = True
            else:
                bank = self.child_banks[message.sender]
                for value, row in zip(message.values, message.rows):
                    if bank.add(value, row):
                        self.dirty_master = True
        self.inbox.clear()

    def activate(self, phases: Sequence[str], round_number: int, bound: float,
                 events: List[dict], dump_dir: Optional[str] = None) -> List[Message]:
        outgoing: List[Message] = []
        for phase in phases:
            self.absorb()
            if phase == MESSAGE_PHASE:
                outgoing += self.message_phase(round_number, bound, events, dump_dir)
            elif phase == LOCAL_PHASE:
                outgoing += self.local_phase(round_number, events)
        return outgoing

    def _event(self, events: List[dict], round_number: int, kind: str, **fields) -> None:
        record = {"round": round_number, "agent": self.name, "event": kind}
        record.update(fields)
        events.append(record)
        trace_logger.debug("%s %s", self.name, kind, extra={"hfmdp": record})

    def message_phase(self, round_number: int, bound: float, events: List[dict],
                      dump_dir: Optional[str] = None) -> List[Message]:
        if self.is_leaf or not self.dirty_master:
            return []
        self.dirty_master = False
        try:
            mlp = build_message_lp(self.index, self.local_bank, self.child_banks,
                                   None if self.is_root else self.own_message)
        except NotReadyError as e:
            self._event(events, round_number, "skip", reason=str(e))
            return []
        if dump_dir:
            write_lp(mlp.lp, os.path.join(dump_dir, f"round{round_number:04d}_{self.name}.lp"))
        solution = solve_message_lp(mlp, bound)
        self.last_master = solution
        self.counters["message_lp_solves"] += solution.solves

        outgoing: List[Message] = []
        change = 0.0
        for k in self.children:
            new = solution.messages[k]
            delta = max_abs_diff(new, self.child_messages[k])
            if delta > self.config.conv_tol:
                change = max(change, delta)
                self.child_messages[k] = new
                outgoing.append(RewardMessage(self.index, k, self.child_banks[k].separator, new, round_number))
                self.dirty_local = True
        if solution.bounded and not self.is_root:
            value, row = subtree_statistics(solution, self.local_bank, self.child_banks)
            if self.reported.add(value, row):
                outgoing.append(FlowMessage(self.index, self.parent, self.separator, (value,), (row,), round_number))
                if self.cache is not None:
                    self.cache.publish_subtree_row(self.subtree_signature, value, row)
        self._event(events, round_number, "message_lp", status=solution.status.value,
                    bounded=solution.bounded, objective=solution.objective,
                    local_bank=len(self.local_bank),
                    child_banks={str(k): len(b) for k, b in self.child_banks.items()},
                    message_change=change,
                    ray=None if solution.ray is None else {str(k): v.tolist() for k, v in solution.ray.items()},
                    active_bounds=len(solution.active_bounds))
        return outgoing

    def _flow_message(self, start: int, round_number: int) -> List[Message]:
        """Report local rows from `start` on as subtree rows (leaves only)."""
        values, rows = [], []
        own = self.local_bank.matrix(OWN)
        for i in range(start, len(self.local_bank)):
            if self.reported.add(self.local_bank.values[i], own[i]):
                values.append(self.local_bank.values[i])
                rows.append(own[i])
        if not values or self.is_root:
            return []
        return [FlowMessage(self.index, self.parent, self.separator, tuple(values), tuple(rows), round_number)]

    def local_phase(self, round_number: int, events: List[dict]) -> List[Message]:
        before = len(self.local_bank)
        outgoing: List[Message] = []
        if self.cache is not None:
            shared = share_flows(self.cache, self.flow_key, self.subsystem, self.discount, self.alpha,
                                 self.local_bank)
            if shared:
                self._event(events, round_number, "shared_flows", rows=shared)
            if not self.is_leaf and not self.is_root:
                fresh = share_subtree_rows(self.cache, self.subtree_signature, self.reported)
                if fresh:
                    outgoing.append(FlowMessage(self.index, self.parent, self.separator,
                                                tuple(v for v, _ in fresh), tuple(r for _, r in fresh),
                                                round_number))
        if self.dirty_local:
            self.dirty_local = False
            self.last_flow = self._solve_local()
            self.local_bank.add_flow(self.last_flow.flow)
            self._event(events, round_number, "standalone", solved_by=self.last_flow.solved_by,
                        objective=self.last_flow.objective, local_bank=len(self.local_bank))
        if len(self.local_bank) > before:
            if self.is_leaf:
                outgoing += self._flow_message(before, round_number)
            else:
                self.dirty_master = True
        return outgoing

    def _inputs(self) -> np.ndarray:
        parts = [self.own_message] + [self.child_messages[k] for k in self.children]
        return np.concatenate(parts) if parts else np.zeros(0)

    def _solve_local(self) -> FlowSolution:
        reward = self.view.adjusted_reward(None if self.is_root else self.own_message, self.child_messages)
        self._last_inputs = self._inputs()
        return self.solver.solve(self.subsystem, self.discount, self.alpha, reward)

    def final_solution(self) -> FlowSolution:
        """The stand-alone optimum under the current messages."""
        if self.last_flow is None or self._last_inputs is None or \
                max_abs_diff(self._inputs(), self._last_inputs) > 0.0:
            self.last_flow = self._solve_local()
        return self.last_flow


@dataclass
class PlanResult:
    values: List[np.ndarray]
    messages: Dict[int, np.ndarray]
    objective: float
    iterations: int
    converged: bool
    message_bound: float
    trace: List[dict] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)
    flows: List[FlowSolution] = field(default_factory=list)
    master_objectives: List[Tuple[int, float, bool]] = field(default_factory=list)


def build_agents(tree: SubsystemTree, weights: RelevanceWeights, config: RunConfig,
                 cache: Optional[ReuseCache] = None) -> List[SubsystemAgent]:
    agents = []
    signatures = subtree_signatures(tree, weights) if cache is not None else [None] * len(tree)
    for j in range(len(tree)):
        if cache is not None:
            key = (class_signature(tree[j], tree.discount).digest, weights.digest(j))
            solver = get_subsystem_solver("cached", cache, key)
        else:
            key = None
            solver = get_subsystem_solver("lp")
        agents.append(SubsystemAgent(tree, j, weights[j], solver, config, cache, key, signatures[j]))
    return agents


RoundObserver = Callable[[int, List[SubsystemAgent], List[dict]], None]


def run_planner(tree: SubsystemTree, weights: RelevanceWeights, config: Optional[RunConfig] = None,
                cache: Optional[ReuseCache] = None, observer: Optional[RoundObserver] = None,
                dump_dir: Optional[str] = None) -> PlanResult:
    """
    Run the agents under the configured schedule until quiescence.

    Raises:
        NonConvergenceError: iteration cap reached, or a master problem still
            rests on its message box after the allowed box doublings
    """
    config = (config or RunConfig()).validate()
    if len(weights) != len(tree):
        raise HfmdpError("one relevance-weight vector per subsystem expected")
    if config.reuse and cache is None:
        cache = ReuseCache(config.dup_tol)
    if not config.reuse:
        cache = None
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
    agents = build_agents(tree, weights, config, cache)
    schedule = get_schedule(config, tree)
    bound = config.message_bound or default_message_bound(tree)
    doublings = 0
    trace: List[dict] = []
    master_objectives: List[Tuple[int, float, bool]] = []
    converged = False
    round_number = 0
    logger.info("planning %d subsystems with the %s schedule", len(tree), schedule.name)

    for plan in schedule.rounds():
        round_number += 1
        if round_number > config.max_iters:
            break
        events: List[dict] = []
        sent = 0
        for step in plan:
            outgoing: List[Message] = []
            for j, phases in step:
                outgoing += agents[j].activate(phases, round_number, bound, events, dump_dir)
            for message in outgoing:
                agents[message.recipient].deliver(message)
            sent += len(outgoing)
        trace.extend(events)
        root = agents[0]
        if any(e["event"] == "message_lp" and e["agent"] == root.name for e in events):
            master_objectives.append((round_number, root.last_master.objective, root.last_master.bounded))
        if observer is not None:
            observer(round_number, agents, events)
        if sent or not all(a.idle for a in agents):
            continue

        boxed = [(a.name,) + bound_ for a in agents
                 if a.last_master is not None and not a.last_master.bounded
                 for bound_ in a.last_master.active_bounds]
        if not boxed:
            converged = True
            break
        if doublings >= config.max_box_doublings:
            raise NonConvergenceError(
                f"master problems still rest on the message box ±{bound:g} after {doublings} doublings",
                trace, boxed)
        bound *= 2.0
        doublings += 1
        logger.info("round %d: box bounds active, raising the message bound to %g", round_number, bound)
        trace.append({"round": round_number, "agent": None, "event": "escalate", "message_bound": bound})
        for a in agents:
            if not a.is_leaf:
                a.dirty_master = True

    if not converged:
        raise NonConvergenceError(f"no convergence within {config.max_iters} rounds", trace)

    flows = [a.final_solution() for a in agents]
    values = [f.values for f in flows]
    objective = float(sum(weights[j] @ values[j] for j in range(len(tree))))
    messages = {k: agents[tree.parent(k)].child_messages[k].copy() for k in range(1, len(tree))}
    counters: Counter = Counter()
    for a in agents:
        counters.update(a.counters)
        counters["standalone_lp_solves"] += a.solver.lp_solves
        counters["standalone_avoided"] += a.solver.avoided
    counters["box_doublings"] = doublings
    if cache is not None:
        counters.update({f"cache_{k}": v for k, v in cache.ledger.items()})
    logger.info("converged after %d rounds, objective %.9g", round_number, objective)
    return PlanResult(values=values, messages=messages, objective=objective, iterations=round_number,
                      converged=True, message_bound=bound, trace=trace, counters=dict(counters),
                      flows=flows, master_objectives=master_objectives)
