"""Tree builders shared by the test modules."""

from __future__ import annotations

import random

from cocval.scenario_tree import ScenarioTree, TreeNode
from cocval.term_structure import TermStructure


def three_atom_tree(rate=None) -> ScenarioTree:
    return ScenarioTree.from_nodes(
        [
            TreeNode("root", 0, short_rate=rate),
            TreeNode("a", 1, "root", 0.7, 0.0),
            TreeNode("b", 1, "root", 0.2, 100.0),
            TreeNode("c", 1, "root", 0.1, 1000.0),
        ]
    )


def chain_tree(flows) -> ScenarioTree:
    """Deterministic liability: one child per node carrying ``flows[t]``."""
    nodes = [TreeNode(0, 0)]
    for t, x in enumerate(flows):
        nodes.append(TreeNode(t + 1, t + 1, t, 1.0, float(x)))
    return ScenarioTree.from_nodes(nodes)


def random_probs(rng: random.Random, k: int) -> list[float]:
    weights = [rng.randint(1, 20) for _ in range(k)]
    total = sum(weights)
    return [w / total for w in weights]


def random_tree(rng: random.Random, max_depth=4, max_children=6, node_rates=False) -> ScenarioTree:
    """Random tree with cash flows on a 0.25 grid (so integer scaling is exact)."""
    depth = rng.randint(1, max_depth)
    nodes = [TreeNode("n", 0, short_rate=_rate(rng) if node_rates else None)]
    frontier = ["n"]
    for t in range(1, depth + 1):
        nxt = []
        for parent in frontier:
            k = rng.randint(1, max_children)
            # keep the deepest levels from exploding
            if len(frontier) > 60:
                k = min(k, 2)
            for i, p in enumerate(random_probs(rng, k)):
                nid = f"{parent}.{i}"
                x = rng.randint(-40, 400) / 4
                if rng.random() < 0.15:
                    x = rng.choice([0.0, 25.0])  # ties
                rate = _rate(rng) if node_rates and t < depth else None
                nodes.append(TreeNode(nid, t, parent, p, x, rate))
                nxt.append(nid)
        frontier = nxt
    return ScenarioTree.from_nodes(nodes)


def _rate(rng: random.Random) -> float:
    return rng.choice([0.0, 0.01, 0.03, 0.06, -0.005, rng.uniform(-0.02, 0.1)])


def random_curve(rng: random.Random, horizon: int, kind: str) -> TermStructure:
    if kind == "flat":
        return TermStructure.flat(_rate(rng))
    return TermStructure.from_spot({m: rng.uniform(-0.01, 0.07) for m in range(1, horizon + 2)})


def random_case(rng: random.Random):
    """``(tree, curve)`` with a flat curve, a full curve or node rates."""
    kind = rng.choice(["flat", "full", "node"])
    tree = random_tree(rng, node_rates=kind == "node")
    curve = None if kind == "node" else random_curve(rng, tree.horizon, kind)
    return tree, curve
