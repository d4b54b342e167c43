"""Deterministic risk-free term structure with annual compounding.

The curve stores today's spot rates ``R_0^(m)``. Because rates are
deterministic, the curve seen at a later time ``t`` is the one implied by
no-arbitrage: ``(1 + R_t^(m))^-m = P(0, t+m) / P(0, t)`` where
``P(0, m) = (1 + R_0^(m))^-m``. At ``t = 0`` every formula reduces to plain
spot discounting.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, NamedTuple

from ._arith import exact
from .errors import InvalidInputError
from .scenario_tree import ConditionalDistribution


@dataclass(frozen=True)
class TermStructure:
    spot_rates: Mapping[int, float]
    mode: str = "full-curve"

    def __post_init__(self):
        if self.mode not in ("flat", "full-curve"):
            raise InvalidInputError(f"unknown curve mode {self.mode!r}")
        rates = {int(m): float(r) for m, r in dict(self.spot_rates).items()}
        for m, r in rates.items():
            if m < 1:
                raise InvalidInputError(f"maturity {m} must be >= 1")
            if not r > -1:
                raise InvalidInputError(f"rate {r!r} for maturity {m} must be > -1")
        if self.mode == "flat" and set(rates) != {1}:
            raise InvalidInputError("a flat curve holds exactly one rate")
        object.__setattr__(self, "spot_rates", MappingProxyType(rates))

    @classmethod
    def flat(cls, rate: float) -> "TermStructure":
        return cls({1: rate}, "flat")

    @classmethod
    def from_spot(cls, rates: Mapping[int, float]) -> "TermStructure":
        return cls(rates, "full-curve")

    def spot(self, m: int) -> float:
        if self.mode == "flat":
            return self.spot_rates[1]
        try:
            return self.spot_rates[m]
        except KeyError:
            raise InvalidInputError(f"curve has no rate for maturity {m}") from None

    def discount_factor(self, m: int) -> Fraction:
        """Exact ``P(0, m)``."""
        if m == 0:
            return Fraction(1)
        return (1 + exact(self.spot(m))) ** -m

    def bond_price(self, t: int, s: int) -> Fraction:
        """Exact time-``t`` price of a unit paid at ``s``."""
        if t > s:
            raise InvalidInputError(f"discounting forward in time ({s} -> {t})")
        return self.discount_factor(s) / self.discount_factor(t)

    def growth(self, t: int) -> Fraction:
        """Exact one-year growth factor ``1 + R_t^(1)``."""
        return self.discount_factor(t) / self.discount_factor(t + 1)

    def rate(self, t: int, m: int) -> float:
        """``R_t^(m)``, the annual rate at time ``t`` for term ``m``."""
        price = float(self.bond_price(t, t + m))
        return price ** (-1.0 / m) - 1.0

    def covers(self, last_maturity: int) -> bool:
        if self.mode == "flat":
            return True
        return all(m in self.spot_rates for m in range(1, last_maturity + 1))

    def is_flat_zero(self) -> bool:
        return all(r == 0 for r in self.spot_rates.values())


def pv(amount, s: int, t: int, curve: TermStructure) -> float:
    """Value at ``t`` of a risk-free payment of ``amount`` at ``s``."""
    if t > s:
        raise InvalidInputError(f"discounting forward in time ({s} -> {t})")
    return float(exact(amount) * curve.bond_price(t, s))


def tv(amount, t: int, s: int, curve: TermStructure) -> float:
    """Value at ``s`` of ``amount`` invested risk-free at ``t``."""
    if s < t:
        raise InvalidInputError(f"terminal time {s} precedes start {t}")
    return float(exact(amount) / curve.bond_price(t, s))


def forward_bond_price(curve: TermStructure, t: int, m: int) -> float:
    """Price fixed at ``t`` for a bond bought at ``t+1`` paying 1 at ``t+1+m``.

    No-arbitrage: ``(1 + R_t^(1))^-1 * B = (1 + R_t^(m+1))^-(m+1)``.
    """
    if m < 1:
        raise InvalidInputError(f"term m must be >= 1, got {m}")
    growth = curve.growth(t)
    return float(growth * curve.bond_price(t, t + m + 1))


SLACK_TOL = 1e-12


class LiquidityCheck(NamedTuple):
    holds: bool
    slack: float


def check_liquidity_premium(
    curve: TermStructure,
    future_rate_model: ConditionalDistribution,
    t: int,
    m: int,
) -> LiquidityCheck:
    """Check ``B_{t+1}^m(t) >= E[(1 + R_{t+1}^(m))^-m]`` for a rate law.

    ``future_rate_model`` is the law of ``R_{t+1}^(m)`` given time ``t``.
    The slack is the left side minus the right side. Rates arrive as
    floats, so a rate equal to the implied forward up to rounding counts as
    satisfying the inequality (``slack >= -1e-12``).
    """
    if m < 1:
        raise InvalidInputError(f"term m must be >= 1, got {m}")
    fwd_exact = curve.growth(t) * curve.bond_price(t, t + m + 1)
    expected = sum(
        (exact(p) * (1 + exact(r)) ** -m for r, p in future_rate_model.atoms),
        Fraction(0),
    )
    slack = fwd_exact - expected
    return LiquidityCheck(slack >= -SLACK_TOL, float(slack))
