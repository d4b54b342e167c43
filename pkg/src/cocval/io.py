"""Input files, generated trees, the Monte Carlo oracle and report rendering.

Input is JSON::

    {"kind": "tree",
     "curve": {"flat": 0.0} | {"spot": [{"maturity": 1, "rate": 0.01}, ...]},
     "risk": {"alpha": 0.9},
     "dividend": {"eta": 0.06} | {"table": [[C, D], ...]},
     "nodes": [{"id": "r", "parent": null}, {"id": "a", "parent": "r", "p": 0.7, "x": 0}, ...]}

A node may carry ``"r"`` (its one-year rate) and ``"t"`` (its time; the
depth below the root by default). Leaving out ``curve`` switches to the node
rates. ``kind: "normal_example"`` replaces ``nodes`` with ``mu``, ``sigma``
(two entries each) and an optional discretisation size ``n``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ._arith import exact, normalized
from .analytic import NormalLiabilitySpec
from .engine import DividendRule, StagewiseResult, ValuationResult, node_growth
from .errors import InvalidInputError
from .risk_measure import RiskMeasureSpec
from .scenario_tree import (
    ConditionalDistribution,
    ScenarioTree,
    StagewiseLiability,
    TreeNode,
    discretize_normal,
)
from .term_structure import TermStructure

DEFAULT_N = 100_000
SIG_DIGITS = 10


@dataclass
class RunConfig:
    input: Optional[str] = None
    command: str = "value"
    alpha: Optional[float] = None
    eta: Optional[float] = None
    table: Optional[list] = None
    curve: Optional[dict] = None
    n: int = DEFAULT_N
    paths: int = 100_000
    seed: Optional[int] = None
    epsilon: float = 0.0
    variant: str = "paper"
    output: Optional[str] = None
    format: str = "table"

    def check(self) -> None:
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.eta is not None and not self.eta >= 0:
            raise InvalidInputError(f"eta must be >= 0, got {self.eta!r}")
        if self.n < 1:
            raise InvalidInputError(f"n must be >= 1, got {self.n}")
        if self.paths < 1:
            raise InvalidInputError(f"paths must be >= 1, got {self.paths}")

    def risk(self) -> RiskMeasureSpec:
        return RiskMeasureSpec(self.alpha)

    def rule(self) -> DividendRule:
        if self.table is not None:
            return DividendRule.piecewise(self.table)
        if self.eta is None:
            raise InvalidInputError("no dividend given (eta or table)")
        return DividendRule.linear(self.eta)


Model = Union[ScenarioTree, NormalLiabilitySpec]


def _number(obj: dict, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is None:
            raise InvalidInputError(f"{where}: missing field {key!r}")
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidInputError(f"{where}: field {key!r} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidInputError(f"{where}: field {key!r} is not finite")
    return float(value)


def parse_curve(obj: Optional[dict]) -> Optional[TermStructure]:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise InvalidInputError("curve: expected an object")
    if "flat" in obj:
        return TermStructure.flat(_number(obj, "flat", "curve"))
    if "spot" in obj:
        rates = {}
        for i, item in enumerate(obj["spot"]):
            where = f"curve.spot[{i}]"
            m = _number(item, "maturity", where)
            if m != int(m):
                raise InvalidInputError(f"{where}: maturity must be an integer")
            if int(m) in rates:
                raise InvalidInputError(f"{where}: duplicate maturity {int(m)}")
            rates[int(m)] = _number(item, "rate", where)
        return TermStructure.from_spot(rates)
    raise InvalidInputError("curve: expected key 'flat' or 'spot'")


def _parse_dividend(obj: Any, config: RunConfig) -> None:
    if obj is None:
        return
    if not isinstance(obj, dict):
        raise InvalidInputError("dividend: expected an object")
    if "eta" in obj:
        config.eta = _number(obj, "eta", "dividend")
    elif "table" in obj:
        table = obj["table"]
        if not isinstance(table, list) or not all(
            isinstance(p, list) and len(p) == 2 for p in table
        ):
            raise InvalidInputError("dividend.table: expected a list of [C, D] pairs")
        config.table = [[float(c), float(d)] for c, d in table]
    else:
        raise InvalidInputError("dividend: expected key 'eta' or 'table'")


def _parse_nodes(items: Any) -> ScenarioTree:
    if not isinstance(items, list) or not items:
        raise InvalidInputError("nodes: expected a non-empty list")
    raw = {}
    for i, item in enumerate(items):
        where = f"nodes[{i}]"
        if not isinstance(item, dict) or "id" not in item:
            raise InvalidInputError(f"{where}: missing field 'id'")
        nid = item["id"]
        if not isinstance(nid, (str, int)) or isinstance(nid, bool):
            raise InvalidInputError(f"{where}: id must be a string or integer")
        if nid in raw:
            raise InvalidInputError(f"{where}: duplicate node id {nid!r}")
        where = f"node {nid!r}"
        parent = item.get("parent")
        root = parent is None
        rate = item.get("r")
        if rate is not None:
            rate = _number(item, "r", where)
        t = item.get("t")
        if t is not None and (isinstance(t, bool) or not isinstance(t, int)):
            raise InvalidInputError(f"{where}: field 't' must be an integer")
        raw[nid] = dict(
            parent=parent,
            p=1.0 if root else _number(item, "p", where),
            x=_number(item, "x", where, 0.0),
            r=rate,
            t=t,
        )
    depth: dict = {}

    def depth_of(nid, seen=()):
        if nid in depth:
            return depth[nid]
        parent = raw[nid]["parent"]
        if parent is None:
            d = 0
        elif parent not in raw:
            raise InvalidInputError(f"node {nid!r}: parent {parent!r} does not exist")
        elif parent in seen:
            raise InvalidInputError(f"node {nid!r}: cycle through parent links")
        else:
            d = depth_of(parent, seen + (nid,)) + 1
        depth[nid] = d
        return d

    nodes = []
    for nid, r in raw.items():
        t = r["t"] if r["t"] is not None else depth_of(nid)
        nodes.append(TreeNode(nid, t, r["parent"], r["p"], r["x"], r["r"]))
    return ScenarioTree.from_nodes(nodes)


def parse_document(doc: Any, config: Optional[RunConfig] = None) -> tuple:
    """Validated ``(model, curve, config)`` from a decoded JSON document."""
    config = config or RunConfig()
    if not isinstance(doc, dict):
        raise InvalidInputError("input: expected a JSON object")
    kind = doc.get("kind")
    risk = doc.get("risk")
    if risk is not None:
        if not isinstance(risk, dict):
            raise InvalidInputError("risk: expected an object")
        if config.alpha is None:
            config.alpha = _number(risk, "alpha", "risk")
    if config.eta is None and config.table is None:
        _parse_dividend(doc.get("dividend"), config)
    if config.alpha is None:
        raise InvalidInputError("risk: missing field 'alpha'")
    curve_obj = config.curve if config.curve is not None else doc.get("curve")
    curve = parse_curve(curve_obj)
    config.curve = curve_obj
    if kind == "tree":
        model = _parse_nodes(doc.get("nodes"))
    elif kind == "normal_example":
        if curve is not None and not curve.is_flat_zero():
            raise InvalidInputError("curve: the normal example needs a zero rate")
        mu, sigma = doc.get("mu"), doc.get("sigma")
        if not (isinstance(mu, list) and isinstance(sigma, list)):
            raise InvalidInputError("normal_example: 'mu' and 'sigma' must be lists")
        if "n" in doc and config.n == DEFAULT_N:
            n = _number(doc, "n", "normal_example")
            if n != int(n):
                raise InvalidInputError("normal_example: 'n' must be an integer")
            config.n = int(n)
        rule = config.rule()
        if not rule.is_linear:
            raise InvalidInputError("normal_example: the closed form needs a linear dividend")
        model = NormalLiabilitySpec(tuple(mu), tuple(sigma), config.alpha, rule.eta)
        curve = TermStructure.flat(0.0)
    else:
        raise InvalidInputError(f"kind: expected 'tree' or 'normal_example', got {kind!r}")
    config.check()
    config.risk()
    config.rule()
    return model, curve, config


def parse_input(path: Union[str, Path], config: Optional[RunConfig] = None) -> tuple:
    """Read and validate an input file; see the module docstring for the format."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    config = config or RunConfig()
    config.input = str(path)
    return parse_document(doc, config)


def _curve_document(curve: Optional[TermStructure]) -> Optional[dict]:
    if curve is None:
        return None
    if curve.mode == "flat":
        return {"flat": curve.spot_rates[1]}
    return {"spot": [{"maturity": m, "rate": r} for m, r in sorted(curve.spot_rates.items())]}


def serialize(
    model: Model,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
    n: Optional[int] = None,
) -> dict:
    """Inverse of :func:`parse_document`."""
    doc: dict = {"risk": {"alpha": spec.level}}
    if rule.is_linear:
        doc["dividend"] = {"eta": rule.eta}
    elif rule.table is not None:
        doc["dividend"] = {"table": [list(p) for p in rule.table]}
    else:
        raise InvalidInputError("a custom dividend function cannot be serialized")
    curve_doc = _curve_document(curve)
    if curve_doc is not None:
        doc["curve"] = curve_doc
    if isinstance(model, NormalLiabilitySpec):
        doc.update(kind="normal_example", mu=list(model.mu), sigma=list(model.sigma))
        if n is not None:
            doc["n"] = n
        return doc
    nodes = []
    for node in model.nodes.values():
        item: dict = {"id": node.id, "parent": node.parent}
        if node.parent is not None:
            item["p"] = node.cond_prob
            item["x"] = node.cash_flow
        if node.short_rate is not None:
            item["r"] = node.short_rate
        item["t"] = node.time
        nodes.append(item)
    doc.update(kind="tree", nodes=nodes)
    return doc


def normal_liability(spec: NormalLiabilitySpec, n: int) -> StagewiseLiability:
    """Two independent years, each discretised into ``n`` equiprobable atoms."""
    return StagewiseLiability(
        tuple(
            ConditionalDistribution(tuple(discretize_normal(mu, sigma, n)))
            for mu, sigma in zip(spec.mu, spec.sigma)
        )
    )


def generate_tree(spec: NormalLiabilitySpec, n: int, max_nodes: int = 2_000_000) -> ScenarioTree:
    """The full ``n``-by-``n`` two-period tree; refuses beyond ``max_nodes``."""
    return normal_liability(spec, n).to_tree(max_nodes)


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    std_error: float
    paths: int
    seed: int
    node: Any = None


def _sample_mean(outcomes: np.ndarray, probs: np.ndarray, paths: int, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    draws = rng.choice(len(outcomes), size=paths, p=probs)
    sample = outcomes[draws]
    se = float(sample.std(ddof=1) / math.sqrt(paths)) if paths > 1 else float("nan")
    return float(sample.mean()), se


def _excess_returns(ys, probs, growth, capital, value, dividend) -> np.ndarray:
    assets = growth * (capital + value)
    cost = growth * capital + dividend
    return np.array(
        [float((assets - y if y <= assets else Fraction(0)) - cost) for y in ys]
    )


def monte_carlo_acceptability(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    result: ValuationResult,
    paths: int,
    seed: int,
    node=None,
) -> MonteCarloEstimate:
    """Sampled ``E[C~] - tv(C) - D`` over the one-year transition from ``node``.

    ``C~`` is the capital provider's payoff, ``(tv(C) + tv(V) - Y)^+`` on the
    continuation set. The exact residual is zero, so the estimate should sit
    within a few standard errors of it.
    """
    if paths < 1:
        raise InvalidInputError(f"paths must be >= 1, got {paths}")
    node = tree.root if node is None else node
    if node not in result.nodes:
        raise InvalidInputError(f"node {node!r} is not a valued non-leaf node")
    ex = result.nodes[node].exact
    kids = tree.children(node)
    ys = [exact(tree.nodes[c].cash_flow) + result.exact_value(c) for c in kids]
    probs = np.array([float(p) for p in normalized([tree.nodes[c].cond_prob for c in kids])])
    outcomes = _excess_returns(
        ys, probs, node_growth(tree, node, curve), ex.capital, ex.value, ex.dividend
    )
    mean, se = _sample_mean(outcomes, probs / probs.sum(), paths, seed)
    return MonteCarloEstimate(mean, se, paths, seed, node)


def monte_carlo_acceptability_stagewise(
    liability: StagewiseLiability,
    curve: Optional[TermStructure],
    result: StagewiseResult,
    paths: int,
    seed: int,
    year: int = 0,
) -> MonteCarloEstimate:
    if paths < 1:
        raise InvalidInputError(f"paths must be >= 1, got {paths}")
    curve = curve or TermStructure.flat(0.0)
    ex = result.nodes[year].exact
    dist = liability.years[year]
    upper = result.exact_value(year + 1)
    ys = [exact(x) + upper for x in dist.values]
    probs = np.array([float(p) for p in normalized(dist.probs)])
    outcomes = _excess_returns(ys, probs, curve.growth(year), ex.capital, ex.value, ex.dividend)
    mean, se = _sample_mean(outcomes, probs / probs.sum(), paths, seed)
    return MonteCarloEstimate(mean, se, paths, seed, year)


# ---- reports ---------------------------------------------------------------


def sig(x: Any) -> Any:
    """Round floats to 10 significant digits; recurse into containers."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, (float, Fraction)):
        x = float(x)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, dict):
        return {str(k): sig(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sig(v) for v in x]
    return x


@dataclass
class Report:
    command: str
    summary: dict
    rows: list = field(default_factory=list)
    columns: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return sig(asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False)

    def table(self) -> str:
        return render_table(self)


def _cell(x: Any) -> str:
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.{SIG_DIGITS}g}"
    if x is None:
        return "-"
    return str(x)


def render_table(report: Report) -> str:
    lines = [f"== {report.command} =="]
    width = max((len(k) for k in report.summary), default=0)
    for k, v in report.summary.items():
        lines.append(f"{k.ljust(width)}  {_cell(v)}")
    if report.rows:
        cols = report.columns or list(report.rows[0])
        cells = [[_cell(row.get(c)) for c in cols] for row in report.rows]
        widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(cols)]
        lines.append("")
        lines.append("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
        lines.append("  ".join("-" * w for w in widths))
        for r in cells:
            lines.append("  ".join(v.rjust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)
