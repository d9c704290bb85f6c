"""
Reuse of work between subsystems of the same class.

Two subsystems share a ClassSignature when their domains, the roles of
their scope positions, their rewards and their CPTs coincide; variable
names do not matter. Flows are cached per (class, relevance-weight
digest) and can be handed to any subsystem of that class, because the
flow polytope depends only on the dynamics and the weights. Subtrees
whose whole structure matches share a SubtreeSignature and may exchange
subtree rows. Reward messages are never shared.
"""

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CacheFormatError, ReuseError
from .local_planner import LocalPolicyBank, conservation_residual
from .model import BasicSubsystem, RelevanceWeights, SubsystemTree

logger = logging.getLogger(__name__)

FlowKey = Tuple[str, str]

CACHE_FORMAT = "hfmdp-flow-cache"
CACHE_VERSION = 1


def _array_bytes(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


@dataclass(frozen=True)
class ClassSignature:
    digest: str
    shape: Tuple[int, ...]
    internal_positions: Tuple[int, ...]

    def __str__(self) -> str:
        return self.digest[:12]


def class_signature(subsystem: BasicSubsystem, discount: float) -> ClassSignature:
    shape = subsystem.scope.shape
    positions = subsystem.internal.positions_in(subsystem.scope)
    h = hashlib.sha256()
    h.update(repr((shape, positions, float(discount))).encode())
    h.update(_array_bytes(subsystem.reward))
    h.update(_array_bytes(subsystem.cpt))
    return ClassSignature(digest=h.hexdigest(), shape=shape, internal_positions=positions)


@dataclass(frozen=True)
class SubtreeSignature:
    digest: str

    def __str__(self) -> str:
        return self.digest[:12]


def subtree_signatures(tree: SubsystemTree, weights: RelevanceWeights) -> List[SubtreeSignature]:
    """
    Bottom-up signature of every subtree: the root's class and weights,
    the positions of its own separator, and the multiset of its children's
    signatures with the separator positions on both sides of each edge.
    """
    digests: Dict[int, str] = {}
    for j in tree.post_order():
        subsystem = tree[j]
        own = tree.sepset(j).positions_in(subsystem.scope) if tree.parent(j) is not None else ()
        edges = []
        for k in tree.children(j):
            sep = tree.sepset(k)
            edges.append((digests[k], sep.positions_in(tree[k].scope), sep.positions_in(subsystem.scope)))
        h = hashlib.sha256()
        h.update(class_signature(subsystem, tree.discount).digest.encode())
        h.update(weights.digest(j).encode())
        h.update(repr((own, sorted(edges))).encode())
        digests[j] = h.hexdigest()
    return [SubtreeSignature(digests[j]) for j in range(len(tree))]


def _rows_equal(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    if a.shape != b.shape:
        return False
    if not a.size:
        return True
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - b))) <= tol * scale


class ReuseCache:
    """Shared store of flows per class and subtree rows per subtree signature."""

    def __init__(self, tol: float = 1e-9):
        self.tol = tol
        self.flows: Dict[FlowKey, List[np.ndarray]] = {}
        self.subtree_rows: Dict[str, List[Tuple[float, np.ndarray]]] = {}
        self.ledger: Counter = Counter()

    def publish_flow(self, key: FlowKey, flow: np.ndarray) -> bool:
        flow = np.asarray(flow, dtype=float)
        stored = self.flows.setdefault(key, [])
        if any(_rows_equal(flow, other, self.tol) for other in stored):
            return False
        stored.append(flow.copy())
        self.ledger["flows_published"] += 1
        return True

    def flows_for(self, key: FlowKey) -> List[np.ndarray]:
        return list(self.flows.get(key, ()))

    def publish_subtree_row(self, signature: SubtreeSignature, value: float, row: np.ndarray) -> bool:
        candidate = np.concatenate([[value], np.asarray(row, dtype=float)])
        stored = self.subtree_rows.setdefault(signature.digest, [])
        for t, r in stored:
            if _rows_equal(candidate, np.concatenate([[t], r]), self.tol):
                return False
        stored.append((float(value), np.asarray(row, dtype=float).copy()))
        self.ledger["subtree_rows_published"] += 1
        return True

    def rows_for(self, signature: SubtreeSignature) -> List[Tuple[float, np.ndarray]]:
        return list(self.subtree_rows.get(signature.digest, ()))

    def to_dict(self) -> dict:
        return {
            "format": CACHE_FORMAT,
            "version": CACHE_VERSION,
            "entries": [
                {"class": cls, "weights": w, "flows": [f.tolist() for f in flows]}
                for (cls, w), flows in sorted(self.flows.items())
            ],
            "subtrees": [
                {"signature": sig, "rows": [{"value": t, "flow": r.tolist()} for t, r in rows]}
                for sig, rows in sorted(self.subtree_rows.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, tol: float = 1e-9) -> "ReuseCache":
        if not isinstance(data, dict) or data.get("format") != CACHE_FORMAT:
            raise CacheFormatError("not an hfmdp flow cache")
        if data.get("version") != CACHE_VERSION:
            raise CacheFormatError(f"cache version {data.get('version')} is not {CACHE_VERSION}")
        cache = cls(tol)
        try:
            for entry in data["entries"]:
                key = (str(entry["class"]), str(entry["weights"]))
                cache.flows[key] = [np.asarray(f, dtype=float) for f in entry["flows"]]
            for entry in data["subtrees"]:
                cache.subtree_rows[str(entry["signature"])] = [
                    (float(r["value"]), np.asarray(r["flow"], dtype=float)) for r in entry["rows"]]
        except (KeyError, TypeError, ValueError) as e:
            raise CacheFormatError(f"malformed cache: {e}") from e
        return cache

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
        logger.info("saved flow cache with %d classes to %s", len(self.flows), path)

    @classmethod
    def load(cls, path: str, tol: float = 1e-9) -> "ReuseCache":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as e:
            raise CacheFormatError(f"{path}: {e}") from e
        return cls.from_dict(data, tol)


def share_flows(cache: ReuseCache, key: FlowKey, subsystem: BasicSubsystem, discount: float,
                alpha: np.ndarray, bank: LocalPolicyBank) -> int:
    """
    Append every cached flow of the recipient's class to its bank, after
    checking the flow still conserves mass for the recipient. Returns the
    number of new bank rows.
    """
    added = 0
    mass = max(1.0, float(np.sum(alpha)) / max(1e-12, 1.0 - discount))
    for flow in cache.flows_for(key):
        if flow.size != subsystem.scope.size or np.any(flow < -1e-12) or \
                conservation_residual(subsystem, discount, alpha, flow) > 1e-8 * mass:
            cache.ledger["rejected"] += 1
            logger.warning("%s: rejected a cached flow that fails conservation", subsystem.name)
            continue
        if bank.add_flow(flow):
            added += 1
    if added:
        cache.ledger["flows_shared"] += added
    return added


def share_subtree_rows(cache: ReuseCache, recipient: SubtreeSignature, bank,
                       donor: Optional[SubtreeSignature] = None) -> List[Tuple[float, np.ndarray]]:
    """
    Copy subtree rows published under `donor` (default: the recipient's
    own signature) into `bank`. Rows only transfer between equal
    signatures. Returns the rows that were new to the bank.
    """
    donor = donor or recipient
    if donor != recipient:
        raise ReuseError(f"subtree {donor} is not equivalent to {recipient}")
    fresh = []
    for value, row in cache.rows_for(donor):
        if bank.add(value, row):
            fresh.append((value, row))
    if fresh:
        cache.ledger["subtree_rows_shared"] += len(fresh)
    return fresh
