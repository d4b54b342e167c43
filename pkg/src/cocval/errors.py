"""Exception types shared across the package.

The CLI maps :class:`InvalidInputError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class InvalidInputError(ValueError):
    """Input violates a structural or domain invariant."""


class NumericalError(ArithmeticError):
    """A computation left the regime in which it is well defined."""
