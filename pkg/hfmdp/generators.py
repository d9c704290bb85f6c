"""
Model generators: the two-subsystem example, the bundled engine model,
and random and structured trees for tests and experiments.

Random trees give every subsystem its own internal variables and its own
action variable, and let a child read a nonempty part of its parent's
scope, so running intersection holds by construction.
"""

import logging
from importlib import resources
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import BasicSubsystem, RelevanceWeights, Scope, SubsystemTree, VariableDecl
from .parsers import ModelFile, parse_model

logger = logging.getLogger(__name__)

BINARY = ("0", "1")


class _Vars:
    """Declares binary variables in creation order."""

    def __init__(self):
        self.decls: List[VariableDecl] = []

    def new(self, name: str, domain: Tuple[str, ...] = BINARY) -> VariableDecl:
        var = VariableDecl(name, domain, len(self.decls))
        self.decls.append(var)
        return var


def _random_cpt(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.dirichlet(np.ones(cols), size=rows)


def _random_reward(rng: np.random.Generator, size: int, scale: float = 5.0) -> np.ndarray:
    return np.round(rng.uniform(-scale, scale, size=size), 3)


def two_subsystem_example() -> Tuple[SubsystemTree, RelevanceWeights]:
    """
    Root M1 (internal x, action a, reward -3x, x' = a) and child M2
    (internal y, reads x and action b, reward 10y, y' = b AND x), γ = 0.9.
    """
    v = _Vars()
    x, y, a, b = v.new("x"), v.new("y"), v.new("a"), v.new("b")
    m1_reward = np.array([-3.0 * xi for xi, ai in np.ndindex(2, 2)])
    m1_cpt = np.array([[1.0 - ai, float(ai)] for xi, ai in np.ndindex(2, 2)])
    m1 = BasicSubsystem("M1", Scope([x]), Scope([a]), m1_reward, m1_cpt)
    # M2 scope in declaration order: x, y, b
    m2_reward = np.array([10.0 * yi for xi, yi, bi in np.ndindex(2, 2, 2)])
    m2_cpt = np.array([[1.0 - (bi & xi), float(bi & xi)] for xi, yi, bi in np.ndindex(2, 2, 2)])
    m2 = BasicSubsystem("M2", Scope([y]), Scope([x, b]), m2_reward, m2_cpt)
    tree = SubsystemTree([m1, m2], {1: 0}, 0.9)
    return tree, RelevanceWeights.ones(tree)


def bundled_model(name: str) -> ModelFile:
    """Parse one of the models shipped in hfmdp/models (name without suffix)."""
    text = resources.files("hfmdp.models").joinpath(f"{name}.hmdp").read_text(encoding="utf-8")
    return parse_model(text, f"{name}.hmdp")


def bundled_model_names() -> List[str]:
    return sorted(p.name[:-5] for p in resources.files("hfmdp.models").iterdir() if p.name.endswith(".hmdp"))


def engine_example() -> Tuple[SubsystemTree, RelevanceWeights]:
    return bundled_model("engine").build()


def random_tree(rng: np.random.Generator, n_subsystems: Optional[int] = None, max_joint: int = 2 ** 12,
                discount: Optional[float] = None) -> Tuple[SubsystemTree, RelevanceWeights]:
    """
    A random tree of 2-4 subsystems over binary variables with at most
    `max_joint` joint assignments of all variables together.
    """
    n = int(n_subsystems or rng.integers(2, 5))
    max_bits = int(np.log2(max_joint))
    v = _Vars()
    scopes: List[Scope] = []
    internals: List[Scope] = []
    externals: List[Scope] = []
    parents = {}
    for j in range(n):
        remaining = max_bits - len(v.decls) - 2 * (n - j - 1)
        n_internal = 2 if remaining >= 3 and rng.random() < 0.3 else 1
        internal = [v.new(f"x{j}_{i}") for i in range(n_internal)]
        external: List[VariableDecl] = []
        if j > 0:
            parent = int(rng.integers(0, j))
            parents[j] = parent
            pool = scopes[parent].variables
            take = int(rng.integers(1, min(2, len(pool)) + 1))
            external.extend(pool[i] for i in sorted(rng.choice(len(pool), size=take, replace=False)))
        if j == 0 or (len(v.decls) < max_bits and rng.random() < 0.7):
            external.append(v.new(f"a{j}"))
        internals.append(Scope(internal))
        externals.append(Scope(external))
        scopes.append(Scope(internal + external))
    subsystems = []
    for j in range(n):
        scope = scopes[j]
        subsystems.append(BasicSubsystem(
            f"M{j}", internals[j], externals[j],
            _random_reward(rng, scope.size),
            _random_cpt(rng, scope.size, internals[j].size)))
    gamma = float(discount if discount is not None else np.round(rng.uniform(0.5, 0.95), 2))
    tree = SubsystemTree(subsystems, parents, gamma)
    logger.debug("random tree with %d subsystems over %d variables", n, len(v.decls))
    return tree, RelevanceWeights.ones(tree)


def _shape_tree(rng: np.random.Generator, parents: Sequence[Optional[int]],
                discount: float) -> Tuple[SubsystemTree, RelevanceWeights]:
    """Each node: internal x_j, action a_j, and the parent's internal variable."""
    v = _Vars()
    xs = [v.new(f"x{j}") for j in range(len(parents))]
    acts = [v.new(f"a{j}") for j in range(len(parents))]
    subsystems = []
    edges = {}
    for j, parent in enumerate(parents):
        external = [acts[j]]
        if parent is not None:
            external.append(xs[parent])
            edges[j] = parent
        internal = Scope([xs[j]])
        scope = internal.union(Scope(external))
        subsystems.append(BasicSubsystem(f"M{j}", internal, Scope(external),
                                         _random_reward(rng, scope.size), _random_cpt(rng, scope.size, 2)))
    tree = SubsystemTree(subsystems, edges, discount)
    return tree, RelevanceWeights.ones(tree)


def chain(n: int, rng: np.random.Generator, discount: float = 0.9) -> Tuple[SubsystemTree, RelevanceWeights]:
    return _shape_tree(rng, [None] + list(range(n - 1)), discount)


def star(n: int, rng: np.random.Generator, discount: float = 0.9) -> Tuple[SubsystemTree, RelevanceWeights]:
    return _shape_tree(rng, [None] + [0] * (n - 1), discount)


def twin_subtrees(rng: np.random.Generator, discount: float = 0.9) -> Tuple[SubsystemTree, RelevanceWeights]:
    """
    A root with two structurally identical two-level subtrees whose
    subsystems share rewards and CPTs position by position.
    """
    v = _Vars()
    r, a0 = v.new("r"), v.new("a0")
    mid_reward, mid_cpt = _random_reward(rng, 8), _random_cpt(rng, 8, 2)
    leaf_reward, leaf_cpt = _random_reward(rng, 8), _random_cpt(rng, 8, 2)
    root_reward, root_cpt = _random_reward(rng, 4), _random_cpt(rng, 4, 2)
    subsystems = [BasicSubsystem("R", Scope([r]), Scope([a0]), root_reward, root_cpt)]
    parents = {}
    for i in (1, 2):
        c, b, leaf, d = v.new(f"c{i}"), v.new(f"b{i}"), v.new(f"l{i}"), v.new(f"d{i}")
        subsystems.append(BasicSubsystem(f"C{i}", Scope([c]), Scope([r, b]), mid_reward, mid_cpt,
                                         class_name="Mid"))
        parents[len(subsystems) - 1] = 0
        subsystems.append(BasicSubsystem(f"L{i}", Scope([leaf]), Scope([c, d]), leaf_reward, leaf_cpt,
                                         class_name="Leaf"))
        parents[len(subsystems) - 1] = len(subsystems) - 2
    tree = SubsystemTree(subsystems, parents, discount)
    return tree, RelevanceWeights.ones(tree)


def shared_state_tree(rng: np.random.Generator, discount: float = 0.9) -> Tuple[SubsystemTree, RelevanceWeights]:
    """
    Parent and child that both model a shared state variable s with the
    same dynamics P(s' | s, a): parent internal {p, s}, child internal {s, q}.
    """
    v = _Vars()
    p, s, q, a, b = v.new("p"), v.new("s"), v.new("q"), v.new("a"), v.new("b")
    shared = 0.05 + 0.9 * rng.random((2, 2))          # P(s'=1 | s, a), bounded away from 0 and 1
    own_p = _random_cpt(rng, 8, 2)                     # P(p' | p, s, a)
    own_q = _random_cpt(rng, 8, 2)                     # P(q' | s, q, b)
    # parent scope (p, s, a), internal (p, s)
    parent_cpt = np.zeros((8, 4))
    for pi, si, ai in np.ndindex(2, 2, 2):
        z = (pi * 2 + si) * 2 + ai
        ps = np.array([1 - shared[si, ai], shared[si, ai]])
        parent_cpt[z] = np.outer(own_p[z], ps).reshape(-1)
    # child scope (s, q, a, b), internal (s, q)
    child_cpt = np.zeros((16, 4))
    for si, qi, ai, bi in np.ndindex(2, 2, 2, 2):
        z = ((si * 2 + qi) * 2 + ai) * 2 + bi
        ps = np.array([1 - shared[si, ai], shared[si, ai]])
        child_cpt[z] = np.outer(ps, own_q[(si * 2 + qi) * 2 + bi]).reshape(-1)
    parent = BasicSubsystem("P", Scope([p, s]), Scope([a]), _random_reward(rng, 8), parent_cpt)
    child = BasicSubsystem("C", Scope([s, q]), Scope([a, b]), _random_reward(rng, 16), child_cpt)
    tree = SubsystemTree([parent, child], {1: 0}, discount)
    return tree, RelevanceWeights.ones(tree)
