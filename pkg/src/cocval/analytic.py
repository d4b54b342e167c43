"""Closed forms for two independent normal cash flows at a zero rate.

``X_0 ~ N(mu_0, sigma_0)`` and ``X_1 ~ N(mu_1, sigma_1)`` are independent and
nothing about ``X_t`` is known before ``t + 1``. With the linear dividend
``eta * C`` and ``VaR_alpha`` the values are

    V_1 = mu_1 + sigma_1 / (1 + eta) * k
    V_0 = mu_0 + mu_1 + (sigma_0 + sigma_1) / (1 + eta) * k
    k   = (1 + eta - alpha) * q - phi(q)

with ``q`` the standard normal ``alpha``-quantile. This module is the oracle
for the tree engine, so it uses nothing from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import InvalidInputError, NumericalError

QUANTILE_TOL = 1e-12


@dataclass(frozen=True)
class NormalLiabilitySpec:
    mu: tuple[float, float]
    sigma: tuple[float, float]
    alpha: float
    eta: float

    def __post_init__(self):
        mu = tuple(float(m) for m in self.mu)
        sigma = tuple(float(s) for s in self.sigma)
        if len(mu) != 2 or len(sigma) != 2:
            raise InvalidInputError("the example has exactly two years")
        if min(sigma) < 0:
            raise InvalidInputError("standard deviations must be >= 0")
        _check_level(self.alpha)
        if not self.eta > 0:
            raise InvalidInputError(f"eta must be > 0, got {self.eta!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def merged(self) -> "NormalLiabilitySpec":
        """Same total cash flow, all paid in year 0 (``X_1 = 0``)."""
        s0, s1 = self.sigma
        return NormalLiabilitySpec(
            (self.mu[0] + self.mu[1], 0.0), (math.hypot(s0, s1), 0.0), self.alpha, self.eta
        )


def _check_level(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha!r}")


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def std_normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def std_normal_quantile(alpha: float) -> float:
    """Bisection on the erfc-based CDF until ``|cdf(q) - alpha| < 1e-12``."""
    _check_level(alpha)
    lo, hi = -40.0, 40.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if std_normal_cdf(mid) < alpha:
            lo = mid
        else:
            hi = mid
    q = min((lo, hi), key=lambda x: abs(std_normal_cdf(x) - alpha))
    if abs(std_normal_cdf(q) - alpha) >= QUANTILE_TOL:
        raise NumericalError(f"normal quantile did not converge for alpha={alpha!r}")
    return q


def f(alpha: float) -> float:
    """``phi(q) - (1 - alpha) q``; positive and decreasing on (0, 1)."""
    q = std_normal_quantile(alpha)
    return std_normal_pdf(q) - (1 - alpha) * q


def g(alpha: float) -> float:
    """``alpha q + phi(q)``; positive on (0, 1)."""
    q = std_normal_quantile(alpha)
    return alpha * q + std_normal_pdf(q)


def _coefficient(alpha: float, eta: float) -> float:
    q = std_normal_quantile(alpha)
    return (1 + eta - alpha) * q - std_normal_pdf(q)


def value(spec: NormalLiabilitySpec) -> tuple[float, float]:
    """``(V_1, V_0)``."""
    k = _coefficient(spec.alpha, spec.eta)
    v1 = spec.mu[1] + spec.sigma[1] / (1 + spec.eta) * k
    v0 = spec.mu[0] + spec.mu[1] + (spec.sigma[0] + spec.sigma[1]) / (1 + spec.eta) * k
    return v1, v0


def upper_bound(spec: NormalLiabilitySpec) -> float:
    """Best estimate plus expected risk margin at time 0."""
    scale = spec.eta * (spec.sigma[0] + spec.sigma[1]) / (1 + spec.eta)
    return spec.mu[0] + spec.mu[1] + scale * g(spec.alpha)


def reversal_threshold(alpha: float) -> float:
    """``eta*`` below which merging the two years raises the value.

    Splitting the risk over two years multiplies the coefficient ``k`` by
    ``sigma_0 + sigma_1`` rather than the smaller ``hypot(sigma_0, sigma_1)``,
    so the order flips exactly when ``k`` changes sign.
    """
    q = std_normal_quantile(alpha)
    return alpha - 1 + std_normal_pdf(q) / q


@dataclass(frozen=True)
class PropositionReport:
    v0: tuple[float, float]  # (L1, L2)
    v0_upper: tuple[float, float]
    part_a: Optional[bool]
    coefficient: float
    reversal: bool
    threshold: Optional[float]
    note: str = ""


def check_proposition(spec: NormalLiabilitySpec) -> PropositionReport:
    """Compare ``spec`` (L1) with its one-year merge (L2).

    Part (a): both values sit strictly below their upper bounds and the
    merged bound is strictly smaller. Part (b): ``V_0(L1) < V_0(L2)`` holds
    exactly when the coefficient ``(1 + eta - alpha) q - phi(q)`` is
    negative. The threshold is only defined for ``alpha > 1/2``.
    """
    merged = spec.merged()
    v_l1, v_l2 = value(spec)[1], value(merged)[1]
    u_l1, u_l2 = upper_bound(spec), upper_bound(merged)
    k = _coefficient(spec.alpha, spec.eta)
    q = std_normal_quantile(spec.alpha)
    threshold = reversal_threshold(spec.alpha) if q > 0 else None
    if spec.sigma[0] == 0 and spec.sigma[1] == 0:
        return PropositionReport(
            (v_l1, v_l2), (u_l1, u_l2), None, k, False, threshold, "no strict inequalities"
        )
    part_a = v_l1 < u_l1 and v_l2 < u_l2 and u_l2 <= u_l1
    if spec.sigma[0] > 0 and spec.sigma[1] > 0:
        part_a = part_a and u_l2 < u_l1
    return PropositionReport((v_l1, v_l2), (u_l1, u_l2), part_a, k, v_l1 < v_l2, threshold)
