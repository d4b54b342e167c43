"""Finite scenario trees carrying liability cash flows.

A node at time ``t + 1`` carries the cash flow of year ``t``: the payment is
only known once the year is over, so it lives on the child that reveals it.
The root sits at time 0 with no cash flow. Leaves sit at time ``T + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from types import MappingProxyType
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from .errors import InvalidInputError

#: Tolerance for probabilities that must sum to one.
PROB_TOL = 1e-12


@dataclass(frozen=True)
class TreeNode:
    id: Hashable
    time: int
    parent: Optional[Hashable] = None
    cond_prob: float = 1.0
    cash_flow: float = 0.0
    short_rate: Optional[float] = None


@dataclass(frozen=True)
class ConditionalDistribution:
    """Finite law given as ``(value, prob)`` atoms."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((v, p) for v, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise InvalidInputError("distribution has no atoms")
        if any(not p > 0 for _, p in atoms):
            raise InvalidInputError("distribution has a non-positive probability")
        total = math.fsum(float(p) for _, p in atoms)
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidInputError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "ConditionalDistribution":
        return cls(tuple(pairs))

    @property
    def values(self) -> tuple:
        return tuple(v for v, _ in self.atoms)

    @property
    def probs(self) -> tuple:
        return tuple(p for _, p in self.atoms)

    def mean(self) -> float:
        return math.fsum(float(v) * float(p) for v, p in self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class ScenarioTree:
    """Immutable finite tree; build with :meth:`from_nodes`.

    Construction does not enforce the probability and timing invariants so
    that broken inputs can still be reported by :func:`validate`.
    """

    nodes: Mapping[Hashable, TreeNode]
    root: Hashable
    _children: Mapping = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        nodes = MappingProxyType(dict(self.nodes))
        object.__setattr__(self, "nodes", nodes)
        children: dict = {nid: [] for nid in nodes}
        for node in nodes.values():
            if node.parent is not None and node.parent in children:
                children[node.parent].append(node.id)
        object.__setattr__(
            self,
            "_children",
            MappingProxyType({k: tuple(v) for k, v in children.items()}),
        )

    @classmethod
    def from_nodes(cls, nodes: Iterable[TreeNode]) -> "ScenarioTree":
        nodes = list(nodes)
        by_id: dict = {}
        for node in nodes:
            if node.id in by_id:
                raise InvalidInputError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node
        roots = [n.id for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise InvalidInputError(f"expected exactly one root, found {len(roots)}")
        return cls(by_id, roots[0])

    def children(self, node_id) -> tuple:
        return self._children[node_id]

    def is_leaf(self, node_id) -> bool:
        return not self._children[node_id]

    @property
    def horizon(self) -> int:
        """Final cash-flow year ``T``; leaves sit at ``T + 1``."""
        return max(n.time for n in self.nodes.values()) - 1

    def levels(self) -> list[list]:
        """Node ids grouped by time, index = time."""
        out: list[list] = [[] for _ in range(self.horizon + 2)]
        for node in self.nodes.values():
            out[node.time].append(node.id)
        return out

    def internal_nodes_backward(self) -> list:
        """Non-leaf ids ordered from the last year back to the root."""
        return [
            nid
            for level in reversed(self.levels())
            for nid in level
            if not self.is_leaf(nid)
        ]

    def uses_node_rates(self) -> bool:
        return any(
            self.nodes[nid].short_rate is not None
            for nid in self.nodes
            if not self.is_leaf(nid)
        )


def validate(tree: ScenarioTree) -> list[str]:
    """Return violated invariants as messages; an empty list means valid."""
    problems: list[str] = []
    nodes = tree.nodes
    root = nodes[tree.root]
    if root.time != 0:
        problems.append(f"node {root.id!r}: root must sit at time 0, found {root.time}")
    for node in nodes.values():
        if node.parent is None:
            continue
        if node.parent not in nodes:
            problems.append(f"node {node.id!r}: parent {node.parent!r} does not exist")
            continue
        parent = nodes[node.parent]
        if node.time != parent.time + 1:
            problems.append(
                f"node {node.id!r}: time inconsistency (time {node.time}, "
                f"parent time {parent.time})"
            )
        if not 0 < node.cond_prob <= 1:
            problems.append(
                f"node {node.id!r}: conditional probability {node.cond_prob!r} "
                "outside (0, 1]"
            )
        if not math.isfinite(node.cash_flow):
            problems.append(f"node {node.id!r}: cash flow is not finite")
    for node in nodes.values():
        if node.short_rate is not None and not node.short_rate > -1:
            problems.append(f"node {node.id!r}: short rate {node.short_rate!r} <= -1")

    leaf_times = {nodes[n].time for n in nodes if tree.is_leaf(n)}
    if len(leaf_times) > 1:
        problems.append(
            "leaves at different depths: times " + ", ".join(map(str, sorted(leaf_times)))
        )
    if leaf_times == {0}:
        problems.append(f"node {root.id!r}: root has no children")

    for nid in nodes:
        kids = tree.children(nid)
        if not kids:
            continue
        total = math.fsum(nodes[c].cond_prob for c in kids)
        if abs(total - 1.0) > PROB_TOL:
            problems.append(
                f"node {nid!r}: probabilities sum ≠ 1 (children sum to {total:.12g})"
            )

    # orphans / cycles: everything must be reachable from the root
    seen = set()
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        stack.extend(tree.children(nid))
    unreachable = [nid for nid in nodes if nid not in seen]
    if unreachable:
        problems.append(
            "unreachable nodes: " + ", ".join(repr(n) for n in unreachable[:10])
        )
    return problems


def require_valid(tree: ScenarioTree) -> None:
    problems = validate(tree)
    if problems:
        raise InvalidInputError("invalid scenario tree: " + "; ".join(problems))


def child_distribution(
    tree: ScenarioTree, node_id, values: Mapping
) -> ConditionalDistribution:
    """Law of ``values`` over the children of ``node_id``.

    Atoms with exactly equal values are merged; no tolerance is applied.
    """
    kids = tree.children(node_id)
    if not kids:
        raise InvalidInputError(f"node {node_id!r} is a leaf")
    missing = [c for c in kids if c not in values]
    if missing:
        raise InvalidInputError(
            f"incomplete assignment: no value for children {missing!r} of {node_id!r}"
        )
    merged: dict = {}
    for c in kids:
        v = values[c]
        merged[v] = merged.get(v, 0.0) + tree.nodes[c].cond_prob
    return ConditionalDistribution(tuple(merged.items()))


def discretize_normal(mu: float, sigma: float, n: int) -> list[tuple[float, float]]:
    """Equiprobable discretisation of ``Normal(mu, sigma)``.

    Atom ``i`` is the conditional mean of the normal over its ``i``-th
    inter-quantile slice, ``mu + sigma * n * (pdf(q_{i-1}) - pdf(q_i))`` with
    ``q_i`` the ``i/n`` quantile. The atom mean equals ``mu``; the variance
    shrinks slightly and converges to ``sigma**2`` as ``n`` grows.
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    prob = 1.0 / n
    if sigma == 0 or n == 1:
        return [(float(mu), prob)] * n
    std = NormalDist()
    dens = [0.0]
    dens.extend(std.pdf(std.inv_cdf(i / n)) for i in range(1, n))
    dens.append(0.0)
    diffs = [dens[i] - dens[i + 1] for i in range(n)]
    # remove the telescoping residue so the atom mean is exactly mu
    drift = math.fsum(diffs) / n
    return [(mu + sigma * n * (d - drift), prob) for d in diffs]


@dataclass(frozen=True)
class StagewiseLiability:
    """Cash flows independent across years with no information revealed early.

    Every node at a given time carries the same subtree, so the tree has
    ``n**(T+1)`` leaves but only one distinct subproblem per year.
    """

    years: tuple  # ConditionalDistribution per cash-flow year 0..T

    @property
    def horizon(self) -> int:
        return len(self.years) - 1

    def node_count(self) -> int:
        total, width = 1, 1
        for dist in self.years:
            width *= len(dist)
            total += width
        return total

    def to_tree(self, max_nodes: int = 2_000_000) -> ScenarioTree:
        count = self.node_count()
        if count > max_nodes:
            raise InvalidInputError(
                f"full tree would hold {count} nodes (cap {max_nodes}); use a smaller n "
                "or the stagewise evaluation"
            )
        nodes = [TreeNode("r", 0)]
        frontier = ["r"]
        for t, dist in enumerate(self.years):
            nxt = []
            for parent in frontier:
                for i, (x, p) in enumerate(dist.atoms):
                    nid = f"{parent}.{i}"
                    nodes.append(TreeNode(nid, t + 1, parent, p, x))
                    nxt.append(nid)
            frontier = nxt
        return ScenarioTree.from_nodes(nodes)


def stagewise_from_pairs(years: Sequence[Sequence[tuple]]) -> StagewiseLiability:
    return StagewiseLiability(tuple(ConditionalDistribution(tuple(y)) for y in years))
