from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from cocval.errors import InvalidInputError
from cocval.scenario_tree import ConditionalDistribution
from cocval.term_structure import (
    TermStructure,
    check_liquidity_premium,
    forward_bond_price,
    pv,
    tv,
)

FLAT6 = TermStructure.flat(0.06)
CURVE = TermStructure.from_spot({1: 0.01, 2: 0.05, 3: 0.03})


def test_pv_examples():
    assert pv(106, 1, 0, FLAT6) == pytest.approx(100, abs=1e-12)
    assert pv(42.5, 3, 3, CURVE) == 42.5
    assert pv(100, 2, 0, CURVE) == pytest.approx(90.702947845805, abs=1e-9)
    with pytest.raises(InvalidInputError, match="discounting forward in time"):
        pv(1, 0, 1, FLAT6)


def test_tv_examples():
    assert tv(100, 0, 1, FLAT6) == pytest.approx(106, abs=1e-12)
    assert tv(7.0, 2, 2, CURVE) == 7.0
    with pytest.raises(InvalidInputError):
        tv(1, 2, 1, FLAT6)


@given(
    x=st.floats(-1e6, 1e6),
    t=st.integers(0, 2),
    k=st.integers(0, 1),
)
def test_pv_tv_round_trip(x, t, k):
    s = t + k
    back = pv(tv(x, t, s, CURVE), s, t, CURVE)
    assert back == pytest.approx(x, rel=1e-12, abs=1e-300)


def test_multi_year_discount_uses_term_rate():
    # on a non-flat curve two one-year steps from today's rates differ from
    # the two-year rate; the engine discounts with the term rate
    two_year = pv(100, 2, 0, CURVE)
    naive = 100 / 1.01 / 1.01
    assert two_year != pytest.approx(naive, abs=1e-6)
    # composing through the implied forward reproduces it
    assert pv(pv(100, 2, 1, CURVE), 1, 0, CURVE) == pytest.approx(two_year, rel=1e-14)


def test_implied_curve_at_later_times():
    assert CURVE.rate(0, 2) == pytest.approx(0.05, rel=1e-12)
    forward = 1.05**2 / 1.01 - 1
    assert CURVE.rate(1, 1) == pytest.approx(forward, rel=1e-12)
    assert float(CURVE.growth(1)) == pytest.approx(1 + forward, rel=1e-14)
    flat = TermStructure.flat(0.03)
    assert flat.rate(5, 7) == pytest.approx(0.03, rel=1e-12)


def test_curve_validation():
    with pytest.raises(InvalidInputError):
        TermStructure.from_spot({1: -1.0})
    with pytest.raises(InvalidInputError):
        TermStructure.from_spot({0: 0.01})
    with pytest.raises(InvalidInputError, match="maturity 4"):
        CURVE.spot(4)
    assert CURVE.covers(3) and not CURVE.covers(4)
    assert FLAT6.covers(50)


def test_forward_bond_price():
    assert forward_bond_price(TermStructure.flat(0.0), 0, 3) == 1.0
    curve = TermStructure.from_spot({1: 0.06, 2: 0.06})
    assert forward_bond_price(curve, 0, 1) == pytest.approx(0.943396226415, abs=1e-12)
    assert forward_bond_price(TermStructure.flat(0.04), 2, 5) == pytest.approx(1.04**-5, rel=1e-14)
    with pytest.raises(InvalidInputError):
        forward_bond_price(curve, 0, 2)


def test_forward_no_arbitrage_rederived():
    # buying the forward with the proceeds of a one-year bond costs the same
    # as buying the (m+1)-year bond today
    for m in (1, 2):
        b = Fraction(forward_bond_price(CURVE, 0, m))
        lhs = b / CURVE.growth(0)
        assert float(lhs) == pytest.approx(float(CURVE.discount_factor(m + 1)), rel=1e-14)


def test_liquidity_premium():
    curve = TermStructure.from_spot({1: 0.02, 2: 0.03, 3: 0.035})
    implied = curve.rate(1, 2)
    equal = check_liquidity_premium(curve, ConditionalDistribution(((implied, 1.0),)), 0, 2)
    assert equal.holds and abs(equal.slack) < 1e-12
    # low future rates make the expected discount factor exceed the forward price
    low = ConditionalDistribution(((implied - 0.02, 0.5), (implied - 0.01, 0.5)))
    res = check_liquidity_premium(curve, low, 0, 2)
    assert not res.holds and res.slack < 0
    zero = check_liquidity_premium(TermStructure.flat(0.0), ConditionalDistribution(((0.0, 1.0),)), 0, 1)
    assert zero.holds and zero.slack == 0.0
    # Jensen: a symmetric spread around the forward rate raises E[(1+R)^-m]
    spread = ConditionalDistribution(((implied - 0.01, 0.5), (implied + 0.01, 0.5)))
    assert not check_liquidity_premium(curve, spread, 0, 2).holds
