"""Weighted model integration over hybrid knowledge bases.

The pipeline: parse a problem, abstract its atoms into propositions,
compile the propositional skeleton into a canonical decision diagram,
enumerate partial models, and integrate a weight density over each
model's region, exactly when the bounds are linear and numerically
otherwise.
"""

from .errors import (
    DivisionByZero,
    NonLinearBound,
    NonPolynomialBound,
    NotPolynomial,
    NotSeparable,
    ParseError,
    ResourceLimit,
    SolverError,
    TheoryMismatch,
    TimeoutExceeded,
    ToleranceNotReached,
    TooLarge,
    UnboundVariable,
    UnboundedRegion,
    UndeclaredVariable,
    ZeroEvidence,
)

__version__ = "0.1.0"
