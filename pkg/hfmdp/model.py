"""
Core model objects: variables, scopes, assignments, basic subsystems,
subsystem trees and hierarchical groups.

Tables are numpy arrays in canonical order: assignments of a scope are
enumerated row-major over its variables in declaration order, the last
variable changing fastest.
"""

import hashlib
import itertools
import math
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import InputError, ScopeError, StructureError
from .utils import marginalize, projection_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariableDecl:
    """A named discrete variable; `index` is its global declaration position."""

    name: str
    domain: Tuple[str, ...]
    index: int = 0

    def __post_init__(self):
        if not self.domain:
            raise InputError(f"variable {self.name!r} has an empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise InputError(f"variable {self.name!r} repeats a domain value")

    @property
    def size(self) -> int:
        return len(self.domain)

    def value_index(self, label: str) -> int:
        try:
            return self.domain.index(label)
        except ValueError:
            raise ScopeError(f"{label!r} is not a value of {self.name}") from None


class Scope:
    """An ordered, duplicate-free set of variables (declaration order)."""

    __slots__ = ("variables", "_by_name")

    def __init__(self, variables: Iterable[VariableDecl] = ()):
        unique: Dict[str, VariableDecl] = {}
        for var in variables:
            seen = unique.get(var.name)
            if seen is not None and seen != var:
                raise ScopeError(f"conflicting declarations for {var.name}")
            unique[var.name] = var
        self.variables: Tuple[VariableDecl, ...] = tuple(
            sorted(unique.values(), key=lambda v: (v.index, v.name)))
        self._by_name = {v.name: i for i, v in enumerate(self.variables)}

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(v.size for v in self.variables)

    @property
    def size(self) -> int:
        """Number of joint assignments (1 for the empty scope)."""
        return math.prod(self.shape)

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self) -> Iterator[VariableDecl]:
        return iter(self.variables)

    def __contains__(self, item) -> bool:
        name = item.name if isinstance(item, VariableDecl) else item
        return name in self._by_name

    def __eq__(self, other) -> bool:
        return isinstance(other, Scope) and self.variables == other.variables

    def __hash__(self) -> int:
        return hash(self.variables)

    def __repr__(self) -> str:
        return f"Scope({', '.join(self.names)})"

    def variable(self, name: str) -> VariableDecl:
        try:
            return self.variables[self._by_name[name]]
        except KeyError:
            raise ScopeError(f"{name} is not in {self!r}") from None

    def union(self, other: "Scope") -> "Scope":
        return Scope(self.variables + other.variables)

    def intersection(self, other: "Scope") -> "Scope":
        return Scope(v for v in self.variables if v.name in other)

    def difference(self, other: "Scope") -> "Scope":
        return Scope(v for v in self.variables if v.name not in other)

    def issubset(self, other: "Scope") -> bool:
        return all(name in other for name in self.names)

    def positions_in(self, other: "Scope") -> Tuple[int, ...]:
        """Axis positions of this scope's variables inside `other`."""
        if not self.issubset(other):
            missing = [n for n in self.names if n not in other]
            raise ScopeError(f"{missing} not in {other!r}")
        return tuple(other._by_name[n] for n in self.names)

    def projection(self, target: "Scope") -> np.ndarray:
        """Index map from each assignment of this scope to its restriction onto `target`."""
        return projection_index(self.shape, target.positions_in(self))


def scope_union(scopes: Iterable[Scope]) -> Scope:
    variables: List[VariableDecl] = []
    for scope in scopes:
        variables.extend(scope.variables)
    return Scope(variables)


@dataclass(frozen=True)
class Assignment:
    """A total assignment to a scope; `values` are domain value indices."""

    scope: Scope
    values: Tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.scope):
            raise ScopeError(f"{len(self.values)} values for {self.scope!r}")
        for var, value in zip(self.scope, self.values):
            if not 0 <= value < var.size:
                raise ScopeError(f"value index {value} out of range for {var.name}")

    @classmethod
    def from_labels(cls, scope: Scope, labels: Mapping[str, str]) -> "Assignment":
        missing = [n for n in scope.names if n not in labels]
        if missing:
            raise ScopeError(f"assignment is missing {missing}")
        return cls(scope, tuple(v.value_index(str(labels[v.name])) for v in scope))

    @property
    def index(self) -> int:
        return assignment_index(self)

    @property
    def labels(self) -> Dict[str, str]:
        return {v.name: v.domain[i] for v, i in zip(self.scope, self.values)}

    def __str__(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.labels.items())


def enumerate_assignments(scope: Scope) -> List[Assignment]:
    """All assignments of `scope` in canonical (row-major) order."""
    return [Assignment(scope, values)
            for values in itertools.product(*(range(v.size) for v in scope))]


def assignment_index(assignment: Assignment) -> int:
    if not assignment.values:
        return 0
    return int(np.ravel_multi_index(assignment.values, assignment.scope.shape))


def assignment_at(scope: Scope, index: int) -> Assignment:
    if not 0 <= index < scope.size:
        raise ScopeError(f"index {index} out of range for {scope!r}")
    if not scope.variables:
        return Assignment(scope, ())
    return Assignment(scope, tuple(int(i) for i in np.unravel_index(index, scope.shape)))


def restrict(assignment: Assignment, target: Scope) -> Assignment:
    """Restriction of a total assignment onto a sub-scope."""
    positions = target.positions_in(assignment.scope)
    return Assignment(target, tuple(assignment.values[p] for p in positions))


def combine(*assignments: Assignment) -> Assignment:
    """Merge assignments over disjoint (or agreeing) scopes."""
    scope = scope_union(a.scope for a in assignments)
    labels: Dict[str, int] = {}
    for a in assignments:
        for var, value in zip(a.scope, a.values):
            if labels.setdefault(var.name, value) != value:
                raise ScopeError(f"assignments disagree on {var.name}")
    return Assignment(scope, tuple(labels[n] for n in scope.names))


@dataclass(frozen=True, eq=False)
class BasicSubsystem:
    """
    A subsystem with internal variables X (whose dynamics it models) and
    external variables A (read only). `reward` has one entry per assignment
    of Scope = X ∪ A; `cpt` has one row per Scope assignment and one column
    per next-step assignment of X.

    Normalization of the CPT rows is checked by validation, not here, so a
    malformed file can still be loaded and reported.
    """

    name: str
    internal: Scope
    external: Scope
    reward: np.ndarray
    cpt: np.ndarray
    class_name: Optional[str] = None

    def __post_init__(self):
        clash = self.internal.intersection(self.external)
        if len(clash):
            raise InputError(f"{self.name}: {clash.names} both internal and external")
        if not len(self.internal):
            raise InputError(f"{self.name}: a subsystem needs at least one internal variable")
        reward = np.asarray(self.reward, dtype=float).reshape(-1)
        cpt = np.asarray(self.cpt, dtype=float)
        scope_size = self.scope.size
        if reward.shape != (scope_size,):
            raise InputError(f"{self.name}: reward has {reward.size} entries, expected {scope_size}")
        if cpt.shape != (scope_size, self.internal.size):
            cpt_size = cpt.size
            if cpt_size != scope_size * self.internal.size:
                raise InputError(
                    f"{self.name}: CPT has {cpt_size} entries, expected "
                    f"{scope_size} x {self.internal.size}")
            cpt = cpt.reshape(scope_size, self.internal.size)
        if not np.all(np.isfinite(reward)) or not np.all(np.isfinite(cpt)):
            raise InputError(f"{self.name}: non-finite reward or CPT entry")
        reward.setflags(write=False)
        cpt.setflags(write=False)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "cpt", cpt)

    @cached_property
    def scope(self) -> Scope:
        return self.internal.union(self.external)

    @cached_property
    def state_index(self) -> np.ndarray:
        """For each Scope assignment, the index of its internal (state) part."""
        return self.scope.projection(self.internal)

    @cached_property
    def action_index(self) -> np.ndarray:
        """For each Scope assignment, the index of its external part."""
        return self.scope.projection(self.external)

    def reward_table(self) -> np.ndarray:
        return self.reward.reshape(self.scope.shape)

    def transition_tensor(self) -> np.ndarray:
        return self.cpt.reshape(self.scope.shape + self.internal.shape)

    def next_marginal(self, target: Scope) -> np.ndarray:
        """CPT rows marginalized onto next-step values of `target` ⊆ internal."""
        return marginalize(self.cpt.T, self.internal.projection(target), target.size).T

    def __repr__(self) -> str:
        return f"BasicSubsystem({self.name}: X={self.internal.names} A={self.external.names})"


class SubsystemTree:
    """
    Basic subsystems arranged in a rooted tree. Index 0 is the root;
    `parents[k]` is the parent index of every k > 0.
    """

    def __init__(self, subsystems: Sequence[BasicSubsystem], parents: Mapping[int, int], discount: float):
        self.subsystems: Tuple[BasicSubsystem, ...] = tuple(subsystems)
        self.parents: Dict[int, int] = {int(k): int(v) for k, v in parents.items()}
        self.discount = float(discount)
        if not 0.0 <= self.discount < 1.0:
            raise InputError(f"discount must be in [0, 1), got {discount}")
        n = len(self.subsystems)
        if n == 0:
            raise StructureError("a subsystem tree needs at least one subsystem")
        names = [m.name for m in self.subsystems]
        if len(set(names)) != n:
            raise StructureError("subsystem names must be unique")
        if 0 in self.parents:
            raise StructureError("the root (index 0) cannot have a parent")
        if set(self.parents) != set(range(1, n)):
            raise StructureError("every non-root subsystem needs exactly one parent")
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(range(n))
        for child, parent in self.parents.items():
            if not 0 <= parent < n:
                raise StructureError(f"unknown parent index {parent}")
            self.graph.add_edge(parent, child)
        if n > 1 and not nx.is_arborescence(self.graph):
            raise StructureError("parent map does not form a tree rooted at index 0")
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self) -> int:
        return len(self.subsystems)

    def __getitem__(self, j: int) -> BasicSubsystem:
        return self.subsystems[j]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"no subsystem named {name!r}") from None

    def parent(self, j: int) -> Optional[int]:
        return self.parents.get(j)

    def children(self, j: int) -> List[int]:
        return sorted(self.graph.successors(j))

    def is_leaf(self, j: int) -> bool:
        return self.graph.out_degree(j) == 0

    def depth(self, j: int) -> int:
        return nx.shortest_path_length(self.graph, 0, j)

    def path(self, j: int, k: int) -> List[int]:
        """Tree path between two subsystems, endpoints included."""
        return nx.shortest_path(self.graph.to_undirected(as_view=True), j, k)

    def post_order(self) -> List[int]:
        """Children before parents, siblings in index order."""
        return _post_order(self)

    def pre_order(self) -> List[int]:
        return _pre_order(self)

    def sepset(self, j: int) -> Scope:
        return sepset(self, j)

    @cached_property
    def internal_scope(self) -> Scope:
        """Internal[M]: variables internal to some subsystem."""
        return scope_union(m.internal for m in self.subsystems)

    @cached_property
    def external_scope(self) -> Scope:
        """External[M]: variables that are no subsystem's internal variable."""
        return scope_union(m.scope for m in self.subsystems).difference(self.internal_scope)

    @cached_property
    def variables(self) -> Scope:
        return scope_union(m.scope for m in self.subsystems)

    def __repr__(self) -> str:
        return f"SubsystemTree({len(self)} subsystems, discount={self.discount})"


def _post_order(tree: SubsystemTree) -> List[int]:
    order: List[int] = []
    stack: List[Tuple[int, bool]] = [(0, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        stack.append((node, True))
        for child in reversed(tree.children(node)):
            stack.append((child, False))
    return order


def _pre_order(tree: SubsystemTree) -> List[int]:
    order: List[int] = []
    stack = [0]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(reversed(tree.children(node)))
    return order


def sepset(tree: SubsystemTree, j: int) -> Scope:
    """S_j = Scope[M_j] ∩ Scope[parent]; empty for the root."""
    parent = tree.parent(j)
    if parent is None:
        return Scope()
    return tree[j].scope.intersection(tree[parent].scope)


@dataclass(frozen=True)
class SubsystemGroup:
    """
    A hierarchical subsystem: members (basic subsystems or groups) joined
    into a tree by `edges` (child name -> parent name) under `root`.
    """

    name: str
    members: Tuple["HierarchicalNode", ...]
    edges: Mapping[str, str] = field(default_factory=dict)
    root: Optional[str] = None

    @property
    def member_names(self) -> Tuple[str, ...]:
        return tuple(m.name for m in self.members)


HierarchicalNode = Union[BasicSubsystem, SubsystemGroup]


def flatten(node: HierarchicalNode, discount: float) -> SubsystemTree:
    """
    Expand nested groups into a tree of basic subsystems. An edge that
    points at a group attaches to that group's designated root.
    """
    basics: List[BasicSubsystem] = []
    parent_of: Dict[str, str] = {}
    root_name = _flatten_into(node, basics, parent_of)

    names = [b.name for b in basics]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise StructureError(f"duplicate subsystem names {dupes}")
    graph = nx.DiGraph()
    graph.add_nodes_from(names)
    for child, parent in parent_of.items():
        graph.add_edge(parent, child)
    if len(names) > 1 and not nx.is_arborescence(graph):
        raise StructureError("group edges do not form a single tree")
    position = {n: i for i, n in enumerate(names)}
    order: List[str] = []
    stack = [root_name]
    while stack:
        current = stack.pop()
        order.append(current)
        stack.extend(sorted(graph.successors(current), key=position.get, reverse=True))
    new_index = {n: i for i, n in enumerate(order)}
    by_name = {b.name: b for b in basics}
    tree = SubsystemTree(
        [by_name[n] for n in order],
        {new_index[c]: new_index[p] for c, p in parent_of.items()},
        discount,
    )
    logger.debug("flattened %s into %d basic subsystems", node.name, len(tree))
    return tree


def _flatten_into(node: HierarchicalNode, basics: List[BasicSubsystem], parent_of: Dict[str, str]) -> str:
    """Append the basics of `node`, record internal edges, return its attach point."""
    if isinstance(node, BasicSubsystem):
        basics.append(node)
        return node.name
    if not node.members:
        raise StructureError(f"group {node.name} has no members")
    attach: Dict[str, str] = {}
    for member in node.members:
        if member.name in attach:
            raise StructureError(f"group {node.name} lists {member.name} twice")
        attach[member.name] = _flatten_into(member, basics, parent_of)
    root = node.root or node.members[0].name
    if root not in attach:
        raise StructureError(f"group {node.name}: root {root} is not a member")
    for child, parent in node.edges.items():
        if child not in attach or parent not in attach:
            raise StructureError(f"group {node.name}: edge {child} -> {parent} names a non-member")
        if child == root:
            raise StructureError(f"group {node.name}: the root {root} cannot have a parent")
        parent_of[attach[child]] = attach[parent]
    unattached = [m for m in attach if m != root and m not in node.edges]
    if unattached:
        raise StructureError(f"group {node.name}: members {unattached} have no parent")
    return attach[root]


class RelevanceWeights:
    """
    Per-subsystem nonnegative weights ᾱ_j over internal assignments, aligned
    with tree indices.
    """

    def __init__(self, vectors: Sequence[np.ndarray], convention: str = "custom"):
        self.vectors: Tuple[np.ndarray, ...] = tuple(np.asarray(v, dtype=float).reshape(-1) for v in vectors)
        for v in self.vectors:
            v.setflags(write=False)
        self.convention = convention

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.vectors[j]

    @classmethod
    def ones(cls, tree: SubsystemTree) -> "RelevanceWeights":
        """Uniform weights scaled so every subsystem carries the same mass K = max |X_j|."""
        mass = max(m.internal.size for m in tree.subsystems)
        return cls([np.full(m.internal.size, mass / m.internal.size) for m in tree.subsystems], "ones")

    @classmethod
    def normalized(cls, tree: SubsystemTree) -> "RelevanceWeights":
        return cls([np.full(m.internal.size, 1.0 / m.internal.size) for m in tree.subsystems], "normalized")

    @classmethod
    def from_named(cls, tree: SubsystemTree, named: Mapping[str, Sequence[float]]) -> "RelevanceWeights":
        missing = [m.name for m in tree.subsystems if m.name not in named]
        if missing:
            raise InputError(f"relevance weights missing for {missing}")
        vectors = []
        for m in tree.subsystems:
            v = np.asarray(named[m.name], dtype=float).reshape(-1)
            if v.size != m.internal.size:
                raise InputError(f"{m.name}: {v.size} weights for {m.internal.size} internal assignments")
            vectors.append(v)
        return cls(vectors, "custom")

    def digest(self, j: int) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.vectors[j], dtype="<f8").tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class WeightsSpec:
    """Weights as written in a model file, resolved against a flattened tree."""

    convention: str = "ones"
    named: Mapping[str, Tuple[float, ...]] = field(default_factory=dict)

    def build(self, tree: SubsystemTree) -> RelevanceWeights:
        if self.convention == "ones":
            return RelevanceWeights.ones(tree)
        if self.convention == "normalized":
            return RelevanceWeights.normalized(tree)
        if self.convention == "custom":
            return RelevanceWeights.from_named(tree, self.named)
        raise InputError(f"unknown weights convention {self.convention!r}")
