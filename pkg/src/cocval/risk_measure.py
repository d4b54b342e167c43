"""Value-at-Risk on finite distributions.

Sign convention: losses are negative, so the risk of a loss is positive.
``rho(Z) = VaR_alpha(-Z)``, the lower ``alpha``-quantile of ``-Z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from ._arith import exact
from .errors import InvalidInputError
from .scenario_tree import PROB_TOL, ConditionalDistribution


@dataclass(frozen=True)
class RiskMeasureSpec:
    level: float
    kind: str = "VaR"

    def __post_init__(self):
        if self.kind != "VaR":
            raise InvalidInputError(f"unsupported risk measure {self.kind!r}")
        if not 0 < self.level < 1:
            raise InvalidInputError(f"level must lie in (0, 1), got {self.level!r}")


def lower_quantile(values: Sequence, probs: Sequence, level: float):
    """``inf{x : P(L <= x) >= level}`` for the law ``(values, probs)``.

    Cumulative probabilities are accumulated exactly and compared with
    ``level - 1e-12``: decimal probabilities such as 0.7 + 0.2 do not hit
    0.9 exactly in binary and must not push the quantile to the next atom.
    Returns the atom itself, so the result's type follows the inputs.
    """
    if not values:
        raise InvalidInputError("empty distribution")
    order = sorted(range(len(values)), key=lambda i: (float(values[i]), values[i]))
    threshold = exact(level) - exact(PROB_TOL)
    cum = Fraction(0)
    for i in order:
        cum += exact(probs[i])
        if cum >= threshold:
            return values[i]
    return values[order[-1]]


def rho(dist: ConditionalDistribution, spec: RiskMeasureSpec):
    """Risk of ``Z`` with law ``dist``: ``VaR_alpha(-Z)``."""
    losses = [-v for v in dist.values]
    return lower_quantile(losses, dist.probs, spec.level)
