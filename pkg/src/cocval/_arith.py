"""Exact rational helpers.

Valuation internals run on :class:`fractions.Fraction` so that algebraically
identical routes (theorem form vs. cut-off form, value vs. best estimate plus
dividend portfolio) give bit-identical floats after a single final rounding.
Floats convert to fractions without loss.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Number = "float | int | Fraction"


def exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(x)


def normalized(probs: Sequence) -> list[Fraction]:
    """Exact probabilities rescaled to sum to exactly one."""
    n = len(probs)
    first = probs[0]
    if all(p == first for p in probs):
        return [Fraction(1, n)] * n
    ps = [exact(p) for p in probs]
    total = sum(ps)
    if total == 1:
        return ps
    return [p / total for p in ps]


def expect(probs: Iterable[Fraction], values: Iterable[Fraction]) -> Fraction:
    return sum((p * v for p, v in zip(probs, values)), Fraction(0))


def exact_sum(values: Iterable[Fraction]) -> Fraction:
    return sum(values, Fraction(0))
