"""Best estimate / risk margin split and upper bounds on the value.

The best-estimate portfolio matches expected cash flows with risk-free
bonds, ``BE_t = sum_s pv(E[X_s | F_t])``. The dividend portfolio ``DP`` holds
everything else, and ``BE_t + DP_t`` reproduces the engine value exactly.
Its value is bounded by the expected risk margin ``sum_s pv(E[D_s | F_t])``,
and, for the linear dividend, by the adjusted margin built from one-year
risks of the best estimate.

Everything here needs a deterministic curve except :func:`recursive_bound`,
which only uses one-year discounting, and :func:`closed_form_bound`, which
falls back to expectation-hypothesis bond prices with a warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Optional

from ._arith import exact, normalized
from .engine import (
    DividendRule,
    StagewiseResult,
    ValuationResult,
    _solve_value,
    node_growth,
    value_liability,
    value_stagewise,
)
from .errors import InvalidInputError, NumericalError
from .risk_measure import RiskMeasureSpec, lower_quantile
from .scenario_tree import ScenarioTree, StagewiseLiability
from .term_structure import TermStructure

#: Tolerance for the decomposition identity and the bound assertions.
BOUND_TOL = 1e-9

PRACTITIONER_VARIANTS = ("paper", "solvency-practice")


class StochasticRateWarning(UserWarning):
    """A bound was computed under node-dependent rates and is not asserted."""


def _require_curve(curve: Optional[TermStructure]) -> TermStructure:
    if curve is None:
        raise InvalidInputError("decomposition requires deterministic curve")
    return curve


def _probs(tree: ScenarioTree, nid) -> list[Fraction]:
    return normalized([tree.nodes[c].cond_prob for c in tree.children(nid)])


def _forward_expectations(tree: ScenarioTree, own: Mapping) -> dict:
    """``E[q_s | node]`` for ``s = t, t+1, ...`` where ``q`` is attached to
    nodes at the year it belongs to (``own[n]`` is the year-``t`` quantity).
    """
    out: dict = {}
    for nid in tree.internal_nodes_backward():
        kids = tree.children(nid)
        ps = _probs(tree, nid)
        depth = max(len(out.get(c, ())) for c in kids)
        later = [Fraction(0)] * depth
        for p, c in zip(ps, kids):
            for k, q in enumerate(out.get(c, ())):
                later[k] += p * q
        out[nid] = [own[nid]] + later
    return out


def _discounted(tree: ScenarioTree, curve: TermStructure, expectations: Mapping) -> dict:
    out = {}
    for nid, seq in expectations.items():
        t = tree.nodes[nid].time
        out[nid] = sum((q * curve.bond_price(t, t + k + 1) for k, q in enumerate(seq)), Fraction(0))
    return out


def _expected_cash_flow_now(tree: ScenarioTree, nid) -> Fraction:
    ps = _probs(tree, nid)
    return sum(
        (p * exact(tree.nodes[c].cash_flow) for p, c in zip(ps, tree.children(nid))), Fraction(0)
    )


def _best_estimate_exact(tree: ScenarioTree, curve: TermStructure) -> dict:
    own = {nid: _expected_cash_flow_now(tree, nid) for nid in tree.nodes if not tree.is_leaf(nid)}
    return _discounted(tree, curve, _forward_expectations(tree, own))


def best_estimate(tree: ScenarioTree, curve: Optional[TermStructure]) -> dict:
    """``BE = sum_s pv(E[X_s | node])`` at every non-leaf node."""
    curve = _require_curve(curve)
    return {k: float(v) for k, v in _best_estimate_exact(tree, curve).items()}


def _deviation_risk(deviations, probs, level) -> Fraction:
    """``rho(-W) = VaR_alpha(W)`` for the law of ``W``."""
    return lower_quantile(deviations, probs, level)


def _dp_step(deviations, probs, growth, spec, rule) -> tuple[Fraction, Fraction, Fraction]:
    """One step of the dividend-portfolio recursion.

    ``deviations`` are ``Y - tv(BE)``. Returns ``(DP, C, D)``.
    """
    risk = _deviation_risk(deviations, probs, spec.level)
    inside = [w <= risk for w in deviations]
    gamma = sum((p for p, a in zip(probs, inside) if a), Fraction(0))
    e_inside = sum((p * w for p, w, a in zip(probs, deviations, inside) if a), Fraction(0))
    dp = _solve_value(e_inside + (1 - gamma) * risk, risk, growth, rule)
    capital = max(risk / growth - dp, Fraction(0))
    return dp, capital, rule(capital)


def _dividend_portfolio_exact(tree, curve, spec, rule, be) -> dict:
    dp: dict = {}
    for nid in tree.internal_nodes_backward():
        growth = curve.growth(tree.nodes[nid].time)
        target = growth * be[nid]
        kids = tree.children(nid)
        ys = [
            exact(tree.nodes[c].cash_flow) + be.get(c, Fraction(0)) + dp.get(c, Fraction(0))
            for c in kids
        ]
        dp[nid] = _dp_step([y - target for y in ys], _probs(tree, nid), growth, spec, rule)[0]
    return dp


def _check_decomposition(be, dp, engine_value, where) -> float:
    worst = 0.0
    for nid in dp:
        err = abs(float(be[nid] + dp[nid] - engine_value(nid)))
        if err > BOUND_TOL:
            raise NumericalError(
                f"best estimate + dividend portfolio differs from value by {err:.3g} "
                f"{where} {nid!r}"
            )
        worst = max(worst, err)
    return worst


def dividend_portfolio(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
    engine_result: Optional[ValuationResult] = None,
) -> dict:
    """Value of the dividend portfolio at every non-leaf node.

    Runs its own backward recursion on ``Y = X + BE + DP``. When
    ``engine_result`` is given, ``BE + DP = V`` is checked to 1e-9.
    """
    curve = _require_curve(curve)
    be = _best_estimate_exact(tree, curve)
    dp = _dividend_portfolio_exact(tree, curve, spec, rule, be)
    if engine_result is not None:
        _check_decomposition(be, dp, engine_result.exact_value, "at node")
    return {k: float(v) for k, v in dp.items()}


def _dividends(result: ValuationResult) -> dict:
    return {nid: nv.exact.dividend for nid, nv in result.nodes.items()}


def expected_risk_margin(
    tree: ScenarioTree, curve: Optional[TermStructure], engine_result: ValuationResult
) -> dict:
    """``sum_s pv(E[D_s | node])`` with the engine's dividends."""
    curve = _require_curve(curve)
    exp = _forward_expectations(tree, _dividends(engine_result))
    return {k: float(v) for k, v in _discounted(tree, curve, exp).items()}


def _assert_below(values, bounds, label) -> None:
    for nid, bound in bounds.items():
        v = values(nid)
        if v > bound + exact(BOUND_TOL):
            raise NumericalError(
                f"value {float(v):.10g} exceeds {label} {float(bound):.10g} at node {nid!r}"
            )


def _closed_form_exact(tree, curve, engine_result) -> dict:
    dividends = _dividends(engine_result)
    own = {nid: _expected_cash_flow_now(tree, nid) + dividends[nid] for nid in dividends}
    exp = _forward_expectations(tree, own)
    if curve is not None:
        return _discounted(tree, curve, exp)
    # expectation-hypothesis zero-coupon prices from node one-year rates
    prices: dict = {}
    out = {}
    for nid in tree.internal_nodes_backward():
        growth = node_growth(tree, nid, None)
        kids = tree.children(nid)
        ps = _probs(tree, nid)
        depth = max(len(prices.get(c, ())) for c in kids)
        later = [Fraction(0)] * depth
        for p, c in zip(ps, kids):
            for k, q in enumerate(prices.get(c, ())):
                later[k] += p * q
        prices[nid] = [1 / growth] + [q / growth for q in later]
        out[nid] = sum((q * b for q, b in zip(exp[nid], prices[nid])), Fraction(0))
    return out


def closed_form_bound(
    tree: ScenarioTree, curve: Optional[TermStructure], engine_result: ValuationResult
) -> dict:
    """``sum_s pv(E[X_s + D_s | node])``; asserts ``V <= bound``.

    Without a deterministic curve the bound is computed with bond prices
    equal to expected discount factors, a warning is issued and nothing is
    asserted.
    """
    bounds = _closed_form_exact(tree, curve, engine_result)
    if curve is None:
        warnings.warn(
            "closed-form bound under node-dependent rates is not asserted",
            StochasticRateWarning,
            stacklevel=2,
        )
    else:
        _assert_below(engine_result.exact_value, bounds, "closed-form bound")
    return {k: float(v) for k, v in bounds.items()}


def _recursive_exact(tree, curve, engine_result) -> dict:
    out = {}
    for nid, nv in engine_result.nodes.items():
        ps = _probs(tree, nid)
        ey = sum(
            (
                p * (exact(tree.nodes[c].cash_flow) + engine_result.exact_value(c))
                for p, c in zip(ps, tree.children(nid))
            ),
            Fraction(0),
        )
        out[nid] = (ey + nv.exact.dividend) / node_growth(tree, nid, curve)
    return out


def recursive_bound(
    tree: ScenarioTree, curve: Optional[TermStructure], engine_result: ValuationResult
) -> dict:
    """``pv(E[X_t] + E[V_{t+1}] + D_t)`` per node; asserts ``V <= bound``."""
    bounds = _recursive_exact(tree, curve, engine_result)
    _assert_below(engine_result.exact_value, bounds, "recursive bound")
    return {k: float(v) for k, v in bounds.items()}


def _one_year_risks(tree, curve, spec, be, dp=None) -> dict:
    """``rho(tv(BE_t) - X_t - BE_{t+1} - dDP_{t+1})`` per node.

    ``dDP`` is the deviation of the next dividend-portfolio value from its
    conditional mean; ``dp=None`` drops it.
    """
    out = {}
    for nid in be:
        kids = tree.children(nid)
        ps = _probs(tree, nid)
        target = curve.growth(tree.nodes[nid].time) * be[nid]
        tilde_y = [exact(tree.nodes[c].cash_flow) + be.get(c, Fraction(0)) for c in kids]
        if dp is not None:
            nxt = [exact(dp.get(c, 0)) for c in kids]
            mean = sum((p * d for p, d in zip(ps, nxt)), Fraction(0))
            tilde_y = [y + d - mean for y, d in zip(tilde_y, nxt)]
        out[nid] = _deviation_risk([y - target for y in tilde_y], ps, spec.level)
    return out


def adjusted_expected_risk_margin(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
    dp_values: Mapping,
) -> dict:
    """``eta/(1+eta) * sum_s pv(E[rho(tv(BE_s) - X_s - BE_{s+1} - dDP_{s+1})])``.

    Only defined for the linear dividend.
    """
    curve = _require_curve(curve)
    if not rule.is_linear:
        raise InvalidInputError("adjusted expected risk margin needs a linear dividend")
    be = _best_estimate_exact(tree, curve)
    risks = _one_year_risks(tree, curve, spec, be, dp_values)
    factor = exact(rule.eta) / (1 + exact(rule.eta))
    summed = _discounted(tree, curve, _forward_expectations(tree, risks))
    return {k: float(factor * v) for k, v in summed.items()}


def _practitioner_factor(eta, epsilon, variant) -> Fraction:
    if variant not in PRACTITIONER_VARIANTS:
        raise InvalidInputError(f"unknown variant {variant!r}")
    if epsilon < 0:
        raise InvalidInputError("epsilon must be >= 0")
    eta = exact(eta)
    if variant == "solvency-practice":
        return eta
    return eta * (1 + exact(epsilon)) / (1 + eta)


def practitioner_margin(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    eta: float,
    epsilon: float = 0.0,
    variant: str = "paper",
) -> dict:
    """Risk margin from one-year best-estimate risks only.

    ``paper``: factor ``eta (1 + epsilon) / (1 + eta)``, an upper bound for
    the adjusted margin when the dividend portfolio moves by at most
    ``epsilon`` times the one-year risk. ``solvency-practice``: factor
    ``eta``, no bound implied.
    """
    curve = _require_curve(curve)
    factor = _practitioner_factor(eta, epsilon, variant)
    be = _best_estimate_exact(tree, curve)
    risks = _one_year_risks(tree, curve, spec, be)
    summed = _discounted(tree, curve, _forward_expectations(tree, risks))
    return {k: float(factor * v) for k, v in summed.items()}


@dataclass(frozen=True)
class MarginReport:
    """Decomposition, margins and bounds keyed by node (or by year)."""

    value: Mapping[Hashable, float]
    best_estimate: Mapping[Hashable, float]
    dividend_portfolio: Mapping[Hashable, float]
    expected_risk_margin: Mapping[Hashable, float]
    adjusted_margin: Optional[Mapping[Hashable, float]]
    practitioner_margin: Optional[Mapping[Hashable, float]]
    recursive_bound: Mapping[Hashable, float]
    closed_form_bound: Mapping[Hashable, float]
    epsilon: float
    variant: str
    root: Hashable
    eta: Optional[float]
    max_decomposition_error: float
    corollary_applies: Optional[bool] = None
    exact_one_year_risks: Optional[Mapping] = field(default=None, repr=False)
    plain_risk_sum: Optional[Mapping] = field(default=None, repr=False)

    def practitioner(self, variant: str, epsilon: float = 0.0) -> Optional[dict]:
        """Practitioner margin for any variant from the same one-year risks."""
        if self.plain_risk_sum is None:
            return None
        factor = _practitioner_factor(self.eta, epsilon, variant)
        return {k: float(factor * v) for k, v in self.plain_risk_sum.items()}

    def at_root(self) -> dict:
        r = self.root
        out = {
            "value": self.value[r],
            "best_estimate": self.best_estimate[r],
            "dividend_portfolio": self.dividend_portfolio[r],
            "expected_risk_margin": self.expected_risk_margin[r],
            "recursive_bound": self.recursive_bound[r],
            "closed_form_bound": self.closed_form_bound[r],
        }
        if self.adjusted_margin is not None:
            out["adjusted_margin"] = self.adjusted_margin[r]
            out["adjusted_bound"] = self.best_estimate[r] + self.adjusted_margin[r]
        if self.practitioner_margin is not None:
            out["practitioner_margin"] = self.practitioner_margin[r]
        return out


def _corollary_applies(risks: Mapping, growths: Mapping) -> bool:
    # the adjusted-margin bound replaces 1 + R + eta by 1 + eta, which only
    # goes the right way when the one-year risk and the rate share a sign
    return all(risks[k] * (growths[k] - 1) >= 0 for k in risks)


def margin_report(
    tree: ScenarioTree,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
    engine_result: Optional[ValuationResult] = None,
    epsilon: float = 0.0,
    variant: str = "paper",
) -> MarginReport:
    curve = _require_curve(curve)
    if engine_result is None:
        engine_result = value_liability(tree, curve, spec, rule)
    be = _best_estimate_exact(tree, curve)
    dp = _dividend_portfolio_exact(tree, curve, spec, rule, be)
    worst = _check_decomposition(be, dp, engine_result.exact_value, "at node")

    rm = _discounted(tree, curve, _forward_expectations(tree, _dividends(engine_result)))
    for nid in dp:
        if dp[nid] > rm[nid] + exact(BOUND_TOL):
            raise NumericalError(f"dividend portfolio exceeds expected risk margin at {nid!r}")
    closed = _closed_form_exact(tree, curve, engine_result)
    _assert_below(engine_result.exact_value, closed, "closed-form bound")
    recursive = _recursive_exact(tree, curve, engine_result)
    _assert_below(engine_result.exact_value, recursive, "recursive bound")

    adjusted = practitioner = None
    applies = None
    risks = None
    if rule.is_linear:
        risks = _one_year_risks(tree, curve, spec, be, dp)
        eta = exact(rule.eta)
        summed = _discounted(tree, curve, _forward_expectations(tree, risks))
        adjusted = {k: eta / (1 + eta) * v for k, v in summed.items()}
        growths = {k: curve.growth(tree.nodes[k].time) for k in risks}
        applies = _corollary_applies(risks, growths)
        if applies:
            _assert_below(
                engine_result.exact_value,
                {k: be[k] + adjusted[k] for k in adjusted},
                "adjusted-margin bound",
            )
        plain = _one_year_risks(tree, curve, spec, be)
        factor = _practitioner_factor(rule.eta, epsilon, variant)
        summed_plain = _discounted(tree, curve, _forward_expectations(tree, plain))
        practitioner = {k: float(factor * v) for k, v in summed_plain.items()}
        adjusted = {k: float(v) for k, v in adjusted.items()}
    else:
        summed_plain = None

    def fl(d):
        return {k: float(v) for k, v in d.items()}

    return MarginReport(
        value={k: nv.value for k, nv in engine_result.nodes.items()},
        best_estimate=fl(be),
        dividend_portfolio=fl(dp),
        expected_risk_margin=fl(rm),
        adjusted_margin=adjusted,
        practitioner_margin=practitioner,
        recursive_bound=fl(recursive),
        closed_form_bound=fl(closed),
        epsilon=epsilon,
        variant=variant,
        root=tree.root,
        eta=rule.eta,
        max_decomposition_error=worst,
        corollary_applies=applies,
        exact_one_year_risks=risks,
        plain_risk_sum=summed_plain,
    )


def stagewise_margin_report(
    liability: StagewiseLiability,
    curve: Optional[TermStructure],
    spec: RiskMeasureSpec,
    rule: DividendRule,
    result: Optional[StagewiseResult] = None,
    epsilon: float = 0.0,
    variant: str = "paper",
) -> MarginReport:
    """:func:`margin_report` for a stagewise-independent liability, keyed by year.

    All nodes of a year share their values, so the dividend portfolio one
    year ahead is deterministic and its deviation term vanishes.
    """
    curve = curve or TermStructure.flat(0.0)
    if result is None:
        result = value_stagewise(liability, curve, spec, rule)
    horizon = liability.horizon
    years = range(horizon + 1)
    means = [
        sum((p * exact(x) for p, x in zip(normalized(d.probs), d.values)), Fraction(0))
        for d in liability.years
    ]

    def discounted(per_year):
        return {
            t: sum((per_year[s] * curve.bond_price(t, s + 1) for s in range(t, horizon + 1)), Fraction(0))
            for t in years
        }

    be = discounted(means)
    dividends = [result.nodes[t].exact.dividend for t in years]
    rm = discounted(dividends)
    closed = discounted([m + d for m, d in zip(means, dividends)])

    dp: dict = {}
    risks: dict = {}
    recursive: dict = {}
    for t in reversed(years):
        dist = liability.years[t]
        ps = normalized(dist.probs)
        growth = curve.growth(t)
        target = growth * be[t]
        after = be.get(t + 1, Fraction(0)) + dp.get(t + 1, Fraction(0))
        xs = [exact(x) for x in dist.values]
        dp[t] = _dp_step([x + after - target for x in xs], ps, growth, spec, rule)[0]
        risks[t] = _deviation_risk(
            [x + be.get(t + 1, Fraction(0)) - target for x in xs], ps, spec.level
        )
        ey = means[t] + result.exact_value(t + 1)
        recursive[t] = (ey + dividends[t]) / growth

    worst = _check_decomposition(be, dp, result.exact_value, "in year")
    for t in years:
        v = result.exact_value(t)
        for bound, label in ((closed[t], "closed-form bound"), (recursive[t], "recursive bound")):
            if v > bound + exact(BOUND_TOL):
                raise NumericalError(f"value exceeds {label} in year {t}")

    adjusted = practitioner = summed = None
    applies = None
    if rule.is_linear:
        eta = exact(rule.eta)
        summed = discounted(risks)
        adjusted = {t: float(eta / (1 + eta) * summed[t]) for t in years}
        factor = _practitioner_factor(rule.eta, epsilon, variant)
        practitioner = {t: float(factor * summed[t]) for t in years}
        applies = _corollary_applies(risks, {t: curve.growth(t) for t in years})

    def fl(d):
        return {k: float(v) for k, v in d.items()}

    return MarginReport(
        value={t: result.nodes[t].value for t in years},
        best_estimate=fl(be),
        dividend_portfolio=fl(dp),
        expected_risk_margin=fl(rm),
        adjusted_margin=adjusted,
        practitioner_margin=practitioner,
        recursive_bound=fl(recursive),
        closed_form_bound=fl(closed),
        epsilon=epsilon,
        variant=variant,
        root=0,
        eta=rule.eta,
        max_decomposition_error=worst,
        corollary_applies=applies,
        exact_one_year_risks=risks,
        plain_risk_sum=summed,
    )
