"""Exception types shared across the solver."""

from __future__ import annotations


class SolverError(Exception):
    """Base class for all errors raised by this package."""


class NotPolynomial(SolverError):
    """An expression could not be rewritten as a polynomial."""


class NotSeparable(SolverError):
    """An atom cannot be solved for the requested variable."""


class NonPolynomialBound(SolverError):
    """A symbolic bound is not a polynomial, so exact integration is out."""


class NonLinearBound(SolverError):
    """A symbolic bound has degree above one, so exact integration is out."""


class UnboundedRegion(SolverError):
    """An integration region is missing a finite lower or upper bound."""


class DivisionByZero(SolverError):
    """Evaluation divided by zero."""


class UnboundVariable(SolverError):
    """Evaluation hit a variable with no assigned value."""


class ParseError(SolverError):
    """Problem text could not be parsed.

    Carries the 1-based line and column of the offending token.
    """

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = "%s (line %d, column %d)" % (message, line, column)
        super().__init__(message)
        self.line = line
        self.column = column


class UndeclaredVariable(ParseError):
    """A formula or weight referenced a variable that was never declared."""


class TheoryMismatch(SolverError):
    """An atom needs a richer theory than the problem declares."""


class ResourceLimit(SolverError):
    """The compiler exceeded its live-node budget."""


class TimeoutExceeded(SolverError):
    """A cooperative deadline expired mid-solve."""


class ToleranceNotReached(SolverError):
    """A numeric estimate stalled above the requested tolerance."""


class ZeroEvidence(SolverError):
    """Conditioning on evidence whose weighted volume is zero."""


class TooLarge(SolverError):
    """The brute-force oracle was asked for more propositions than it enumerates."""
