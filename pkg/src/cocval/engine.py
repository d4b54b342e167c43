"""Backward one-year replication with cost-of-capital dividends.

At a node with continuation value ``Y = X_t + V_{t+1}`` and one-year growth
factor ``G = 1 + R_t^(1)`` the replicating portfolio holds only risk-free
bonds. With ``rho = VaR_alpha(Y)`` the continuation set is ``A = {Y <= rho}``
with probability ``gamma``, and the value solves

    G * V = E[1_A Y] + (1 - gamma) * rho + D(C),    C = rho / G - V.

For the linear dividend ``D = eta * C`` this is a linear equation in ``V``;
for any other eligible dividend the left-minus-right map is strictly
increasing in ``V`` and is solved by bisection.

All node arithmetic is exact (``fractions.Fraction``); floats appear only in
the returned records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Mapping, NamedTuple, Optional, Sequence

from ._arith import exact, normalized
from ._roots import bisect_increasing
from .errors import InvalidInputError, NumericalError
from .risk_measure import RiskMeasureSpec, lower_quantile, rho as risk_of
from .scenario_tree import (
    ConditionalDistribution,
    ScenarioTree,
    StagewiseLiability,
    require_valid,
)
from .term_structure import TermStructure

#: Largest negative capital tolerated (and clamped to zero).
CAPITAL_TOL = 1e-9


@dataclass(frozen=True)
class DividendRule:
    """Eligible dividend ``D(C)``: continuous, increasing, ``D(0) = 0``.

    Use :meth:`linear`, :meth:`piecewise` or :meth:`custom`.
    """

    eta: Optional[float] = None
    table: Optional[tuple] = None
    func: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        kinds = sum(x is not None for x in (self.eta, self.table, self.func))
        if kinds != 1:
            raise InvalidInputError("a dividend rule needs exactly one of eta, table, func")
        if self.eta is not None and not self.eta >= 0:
            raise InvalidInputError(f"cost-of-capital rate must be >= 0, got {self.eta!r}")
        if self.table is not None:
            pts = tuple((float(c), float(d)) for c, d in self.table)
            if not pts:
                raise InvalidInputError("dividend table is empty")
            if pts[0] == (0.0, 0.0):
                pts = pts[1:]
            prev_c, prev_d = 0.0, 0.0
            for c, d in pts:
                if not c > prev_c:
                    raise InvalidInputError("dividend table capitals must increase from 0")
                if not d >= prev_d:
                    raise InvalidInputError("dividend table must be non-decreasing from D(0)=0")
                prev_c, prev_d = c, d
            object.__setattr__(self, "table", pts)
        if self.func is not None and self.func(0.0) != 0:
            raise InvalidInputError("custom dividend must satisfy D(0) = 0")

    @classmethod
    def linear(cls, eta: float) -> "DividendRule":
        return cls(eta=eta)

    @classmethod
    def piecewise(cls, points: Sequence) -> "DividendRule":
        """Piecewise-linear through the origin; the last slope extends beyond."""
        return cls(table=tuple(points))

    @classmethod
    def custom(cls, func: Callable[[float], float]) -> "DividendRule":
        return cls(func=func)

    @property
    def is_linear(self) -> bool:
        return self.eta is not None

    def __call__(self, capital) -> Fraction:
        c = exact(capital)
        if c <= 0:
            return Fraction(0)
        if self.eta is not None:
            return exact(self.eta) * c
        if self.table is not None:
            return _interpolate(self.table, c)
        return exact(self.func(float(c)))

    def describe(self) -> dict:
        if self.eta is not None:
            return {"eta": self.eta}
        if self.table is not None:
            return {"table": [list(p) for p in self.table]}
        return {"custom": getattr(self.func, "__name__", "callable")}


def _interpolate(table, c: Fraction) -> Fraction:
    prev_c, prev_d = Fraction(0), Fraction(0)
    for tc, td in table:
        tc, td = exact(tc), exact(td)
        if c <= tc:
            return prev_d + (td - prev_d) * (c - prev_c) / (tc - prev_c)
        last_slope = (td - prev_d) / (tc - prev_c)
        prev_c, prev_d = tc, td
    return prev_d + last_slope * (c - prev_c)


class ExactNode(NamedTuple):
    value: Fraction
    capital: Fraction
    dividend: Fraction
    gamma: Fraction
    rho: Fraction
    growth: Fraction


@dataclass(frozen=True)
class NodeValuation:
    value: float
    capital: float
    dividend: float
    gamma: float
    rho: float
    flags: Mapping[Hashable, bool]
    exact: ExactNode = field(repr=False)


@dataclass(frozen=True)
class ValuationResult:
    """Per-node valuations of all non-leaf nodes; leaves carry value 0."""

    tree: ScenarioTree = field(repr=False)
    nodes: Mapping[Hashable, NodeValuation]
    deterministic_curve: bool

    @property
    def root_value(self) -> float:
        return self.nodes[self.tree.root].value

    @property
    def root(self) -> NodeValuation:
        return self.nodes[self.tree.root]

    def exact_value(self, node_id) -> Fraction:
        if self.tree.is_leaf(node_id):
            return Fraction(0)
        return self.nodes[node_id].exact.value

    def value(self, node_id) -> float:
        return float(self.exact_value(node_id))


def _solve_value(base: Fraction, rho: Fraction, growth: Fraction, rule: DividendRule) -> Fraction:
    """Solve ``G V = base + D(rho/G - V)`` for ``V``."""
    if rule.is_linear:
        eta = exact(rule.eta)
        return (base + eta * rho / growth) / (growth + eta)
    hi = rho / growth  # zero capital
    lo = base / growth  # capital absorbs the whole shortfall, dividend ignored

    def excess(v):
        return v - (base + rule(hi - v)) / growth

    tol = (1 + abs(rho)) / 2**50
    return exact(bisect_increasing(excess, lo, hi, tol))


def _finish(value, rho, gamma, growth, rule, flags, where="") -> NodeValuation:
    capital = rho / growth - value
    if capital < 0:
        if capital < -exact(CAPITAL_TOL):
            raise NumericalError(
                f"negative capital{where}: inputs violate Theorem regime "
                f"(C = {float(capital):.6g})"
            )
        capital = Fraction(0)
    dividend = rule(capital)
    ex = ExactNode(value, capital, dividend, gamma, rho, growth)
    return NodeValuation(
        float(value), float(capital), float(dividend), float(gamma), float(rho), flags, ex
    )


def _node_from_atoms(keys, values, probs, growth, spec, rule, where="") -> NodeValuation:
    ys = [exact(v) for v in values]
    ps = normalized(probs)
    rho = lower_quantile(ys, ps, spec.level)
    inside = [y <= rho for y in ys]
    gamma = sum((p for p, a in zip(ps, inside) if a), Fraction(0))
    e_inside = sum((p * y for p, y, a in zip(ps, ys, inside) if a), Fraction(0))
    base = e_inside + (1 - gamma) * rho
    value = _solve_value(base, rho, growth, rule)
    return _finish(value, rho, gamma, growth, rule, dict(zip(keys, inside)), where)


def _growth_from_rate(rate) -> Fraction:
    if not rate > -1:
        raise InvalidInputError(f"one-year rate must be > -1, got {rate!r}")
    return 1 + exact(rate)


def node_value(
    y_dist: ConditionalDistribution, rate, spec: RiskMeasureSpec, rule: DividendRule
) -> NodeValuation:
    """One backward step for the law of ``Y`` and one-year rate ``rate``.

    Flags are keyed by atom index.
    """
    return _node_from_atoms(
        range(len(y_dist)), y_dist.values, y_dist.probs, _growth_from_rate(rate), spec, rule
    )


def cutoff_value(
    y_dist: ConditionalDistribution, rate, spec: RiskMeasureSpec, rule: DividendRule
) -> NodeValuation:
    """Same step computed through the cut-off ``Z = min(Y, rho)`` on the default set.

    ``V = pv(E[Z] + D)``; must agree exactly with :func:`node_value`.
    """
    growth = _growth_from_rate(rate)
    ys = [exact(v) for v in y_dist.values]
    ps = normalized(y_dist.probs)
    rho = risk_of(ConditionalDistribution(tuple(zip([-y for y in ys], ps))), spec)
    flags = {}
    z = []
    for i, y in enumerate(ys):
        flags[i] = y <= rho
        z.append(y if flags[i] else rho)
    gamma = sum((p for i, p in enumerate(ps) if flags[i]), Fraction(0))
    expected_z = sum((p * v for p, v in zip(ps, z)), Fraction(0))
    value = _solve_value(expected_z, rho, growth, rule)
    return _finish(value, rho, gamma, growth, rule, flags)


def node_growth(tree: ScenarioTree, node_id, curve: Optional[TermStructure]) -> Fraction:
    node = tree.nodes[node_id]
    if curve is not None:
        return curve.growth(node.time)
    if node.short_rate is None:
        raise InvalidInputError(
            f"node {node_id!r}: no one-year rate and no deterministic curve supplied"
        )
    return _growth_from_rate(node.short_rate)


def _check_curve(tree: ScenarioTree, curve: Optional[TermStructure]) -> None:
    if curve is not None and not curve.covers(tree.horizon + 1):
        raise InvalidInputError(
            f"curve must cover maturities 1..{tree.horizon + 1} for this tree"
        )


def value_liability(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
) -> ValuationResult:
    """Value every node backwards from the leaves (where the value is 0).

    With ``curve=None`` each non-leaf node's ``short_rate`` is its one-year
    rate; with a curve, node rates are ignored.
    """
    require_valid(tree)
    _check_curve(tree, curve)
    values: dict = {}
    out: dict = {}
    for nid in tree.internal_nodes_backward():
        kids = tree.children(nid)
        ys = [exact(tree.nodes[c].cash_flow) + values.get(c, Fraction(0)) for c in kids]
        probs = [tree.nodes[c].cond_prob for c in kids]
        growth = node_growth(tree, nid, curve)
        nv = _node_from_atoms(kids, ys, probs, growth, spec, rule, where=f" at node {nid!r}")
        values[nid] = nv.exact.value
        out[nid] = nv
    return ValuationResult(tree, out, curve is not None)


def continuation_values(tree: ScenarioTree, result: ValuationResult, node_id) -> list[Fraction]:
    """Exact ``Y = X + V`` over the children of ``node_id``."""
    return [
        exact(tree.nodes[c].cash_flow) + result.exact_value(c) for c in tree.children(node_id)
    ]


def acceptability_residual(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
    result: ValuationResult,
) -> dict:
    """``E[1_A (tv(C) + tv(V) - Y)] - tv(C) - D`` per non-leaf node.

    ``A`` is rebuilt from the returned capital and value, not from the
    stored flags, and ``D`` is recomputed from the rule.
    """
    out = {}
    for nid, nv in result.nodes.items():
        growth = node_growth(tree, nid, curve)
        capital, value = nv.exact.capital, nv.exact.value
        assets = growth * (capital + value)
        ys = continuation_values(tree, result, nid)
        ps = normalized([tree.nodes[c].cond_prob for c in tree.children(nid)])
        payoff = sum((p * (assets - y) for p, y in zip(ps, ys) if y <= assets), Fraction(0))
        out[nid] = float(payoff - growth * capital - rule(capital))
    return out


def split_portfolio(
    reference_value, y_dist: ConditionalDistribution, rate, rule: DividendRule
) -> tuple[float, float]:
    """Carve capital out of a reference portfolio worth ``reference_value``.

    Keeps ``A0 = {Y <= tv(V0)}`` fixed and solves
    ``tv(C) + D(C) = E[1_A0 (tv(V0) - Y)]``. Returns ``(V0 - C, C)``.
    """
    growth = _growth_from_rate(rate)
    v0 = exact(reference_value)
    target = growth * v0
    ps = normalized(y_dist.probs)
    ys = [exact(v) for v in y_dist.values]
    shortfall = sum((p * (target - y) for p, y in zip(ps, ys) if y <= target), Fraction(0))
    if shortfall < 0:
        raise NumericalError("V0 too small to admit split")
    if rule.is_linear:
        capital = shortfall / (growth + exact(rule.eta))
    else:
        capital = exact(
            bisect_increasing(
                lambda c: growth * c + rule(c) - shortfall,
                Fraction(0),
                shortfall / growth,
                (1 + abs(shortfall)) / 2**50,
            )
        )
    return float(v0 - capital), float(capital)


@dataclass(frozen=True)
class StagewiseResult:
    """Valuation of a :class:`StagewiseLiability`; one record per year."""

    liability: StagewiseLiability = field(repr=False)
    nodes: tuple  # NodeValuation for times 0..T

    @property
    def root_value(self) -> float:
        return self.nodes[0].value

    def exact_value(self, t: int) -> Fraction:
        if t > self.liability.horizon:
            return Fraction(0)
        return self.nodes[t].exact.value


def value_stagewise(
    liability: StagewiseLiability,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
) -> StagewiseResult:
    """Value a stagewise-independent liability one subproblem per year.

    Every node at time ``t`` has the same value, so the year-``t`` step only
    needs the law of ``X_t`` shifted by the (deterministic) ``V_{t+1}``.
    Matches :func:`value_liability` on the expanded tree.
    """
    curve = curve or TermStructure.flat(0.0)
    nodes: list = [None] * len(liability.years)
    upper = Fraction(0)
    for t in reversed(range(len(liability.years))):
        dist = liability.years[t]
        ys = [exact(x) + upper for x in dist.values]
        nv = _node_from_atoms(
            range(len(dist)), ys, dist.probs, curve.growth(t), spec, rule, where=f" in year {t}"
        )
        nodes[t] = nv
        upper = nv.exact.value
    return StagewiseResult(liability, tuple(nodes))


def stagewise_acceptability_residual(
    liability: StagewiseLiability,
    curve: Optional[TermStructure],
    rule: DividendRule,
    result: StagewiseResult,
) -> dict:
    """:func:`acceptability_residual` for a stagewise valuation, keyed by year."""
    curve = curve or TermStructure.flat(0.0)
    out = {}
    for t, nv in enumerate(result.nodes):
        growth = curve.growth(t)
        capital, value = nv.exact.capital, nv.exact.value
        assets = growth * (capital + value)
        upper = result.exact_value(t + 1)
        dist = liability.years[t]
        ps = normalized(dist.probs)
        payoff = sum(
            (p * (assets - y) for p, y in zip(ps, (exact(x) + upper for x in dist.values)) if y <= assets),
            Fraction(0),
        )
        out[t] = float(payoff - growth * capital - rule(capital))
    return out
