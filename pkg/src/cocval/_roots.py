"""Scalar bisection for monotone increasing maps."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

from .errors import NumericalError


def _midpoint(lo, hi):
    mid = (lo + hi) / 2
    if isinstance(mid, Fraction):
        # snap to a float inside the bracket so denominators stay small
        snapped = Fraction(float(mid))
        if lo < snapped < hi:
            return snapped
    return mid


def bisect_increasing(fn: Callable, lo, hi, tol, max_iter: int = 4000):
    """Root of an increasing ``fn`` on ``[lo, hi]``.

    Iterates until the bracket is no wider than ``tol`` or the midpoint
    stops moving. Works on floats or fractions; ``fn`` must return values
    comparable with 0.
    """
    if lo > hi:
        raise NumericalError(f"empty bisection bracket [{lo}, {hi}]")
    f_lo = fn(lo)
    if f_lo == 0:
        return lo
    f_hi = fn(hi)
    if f_hi == 0:
        return hi
    if f_lo > 0 or f_hi < 0:
        raise NumericalError(
            f"bisection bracket does not enclose a root: f(lo)={float(f_lo):.6g}, "
            f"f(hi)={float(f_hi):.6g}"
        )
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = _midpoint(lo, hi)
        if not lo < mid < hi:
            break
        f_mid = fn(mid)
        if f_mid == 0:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return _midpoint(lo, hi) if hi > lo else lo
