"""Exact arithmetic expressions, polynomials, and bound manipulation.

Expressions are immutable trees over rational constants and named real
variables.  Polynomials are the normal form used everywhere exactness
matters: atom identity, symbolic integration, and bound solving.  All
coefficients are `fractions.Fraction`, so arithmetic never loses
precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Union

from .errors import (
    DivisionByZero,
    NotPolynomial,
    NotSeparable,
    UnboundVariable,
)

Rational = Union[int, Fraction]

# Expression node kinds.  ADD and MUL are n-ary, SUB and DIV binary,
# POW carries its natural-number exponent in `value`.
CONST = "const"
VAR = "var"
ADD = "+"
SUB = "-"
MUL = "*"
DIV = "/"
POW = "^"

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class Expr:
    """An immutable arithmetic expression tree.

    `value` holds the Fraction of a constant, the name of a variable, or
    the integer exponent of a power node; it is None otherwise.
    """

    kind: str
    value: object = None
    args: tuple = ()

    def __add__(self, other):
        return add(self, coerce(other))

    def __radd__(self, other):
        return add(coerce(other), self)

    def __sub__(self, other):
        return sub(self, coerce(other))

    def __rsub__(self, other):
        return sub(coerce(other), self)

    def __mul__(self, other):
        return mul(self, coerce(other))

    def __rmul__(self, other):
        return mul(coerce(other), self)

    def __truediv__(self, other):
        return div(self, coerce(other))

    def __pow__(self, exponent):
        return pow_(self, exponent)

    def __neg__(self):
        return mul(const(-1), self)

    def variables(self) -> set:
        out = set()
        stack = [self]
        while stack:
            e = stack.pop()
            if e.kind == VAR:
                out.add(e.value)
            else:
                stack.extend(e.args)
        return out

    def evaluate(self, assignment: Mapping[str, Rational]) -> Fraction:
        return evaluate(self, assignment)

    def __str__(self):
        return format_expr(self)


def const(c: Rational) -> Expr:
    return Expr(CONST, Fraction(c))


def var(name: str) -> Expr:
    return Expr(VAR, name)


def add(*args: Expr) -> Expr:
    if not args:
        raise ValueError("add needs at least one argument")
    if len(args) == 1:
        return args[0]
    return Expr(ADD, None, tuple(args))


def sub(a: Expr, b: Expr) -> Expr:
    return Expr(SUB, None, (a, b))


def mul(*args: Expr) -> Expr:
    if not args:
        raise ValueError("mul needs at least one argument")
    if len(args) == 1:
        return args[0]
    return Expr(MUL, None, tuple(args))


def div(a: Expr, b: Expr) -> Expr:
    return Expr(DIV, None, (a, b))


def pow_(a: Expr, exponent: int) -> Expr:
    if exponent < 0:
        raise ValueError("exponents must be natural numbers")
    return Expr(POW, int(exponent), (a,))


def coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return const(x)
    raise TypeError("cannot use %r in an expression" % (x,))


ZERO = const(0)
ONE = const(1)


def evaluate(e: Expr, assignment: Mapping[str, Rational]) -> Fraction:
    """Evaluate `e` exactly under a variable assignment.

    Raises UnboundVariable for missing variables and DivisionByZero when
    a denominator evaluates to zero.
    """
    if e.kind == CONST:
        return e.value
    if e.kind == VAR:
        try:
            return Fraction(assignment[e.value])
        except KeyError:
            raise UnboundVariable("no value for variable %r" % e.value) from None
    if e.kind == ADD:
        total = Fraction(0)
        for a in e.args:
            total += evaluate(a, assignment)
        return total
    if e.kind == SUB:
        return evaluate(e.args[0], assignment) - evaluate(e.args[1], assignment)
    if e.kind == MUL:
        total = Fraction(1)
        for a in e.args:
            total *= evaluate(a, assignment)
        return total
    if e.kind == DIV:
        denom = evaluate(e.args[1], assignment)
        if denom == 0:
            raise DivisionByZero("division by zero while evaluating %s" % e)
        return evaluate(e.args[0], assignment) / denom
    if e.kind == POW:
        return evaluate(e.args[0], assignment) ** e.value
    raise ValueError("unknown expression kind %r" % e.kind)


def format_expr(e: Expr) -> str:
    """Render an expression in the s-expression surface syntax."""
    if e.kind == CONST:
        f = e.value
        return str(f.numerator) if f.denominator == 1 else "%d/%d" % (f.numerator, f.denominator)
    if e.kind == VAR:
        return e.value
    if e.kind == POW:
        return "(^ %s %d)" % (format_expr(e.args[0]), e.value)
    return "(%s %s)" % (e.kind, " ".join(format_expr(a) for a in e.args))


# ---------------------------------------------------------------------------
# Polynomials

# A monomial is a tuple of (variable, exponent) pairs sorted by name,
# with all exponents >= 1.  The empty tuple is the constant monomial.
Monomial = tuple


class Polynomial:
    """A multivariate polynomial with exact rational coefficients.

    Stored as a map from monomial to coefficient with no zero entries,
    which makes structural equality coincide with mathematical equality.
    """

    __slots__ = ("_terms", "_key")

    def __init__(self, terms: Optional[dict] = None):
        self._terms = {m: c for m, c in (terms or {}).items() if c != 0}
        self._key = None

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @classmethod
    def constant(cls, c: Rational) -> "Polynomial":
        c = Fraction(c)
        return cls({(): c} if c else {})

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        return cls({((name, 1),): Fraction(1)})

    def key(self) -> tuple:
        """A canonical hashable form: sorted (monomial, coefficient) pairs."""
        if self._key is None:
            self._key = tuple(sorted(self._terms.items()))
        return self._key

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __add__(self, other):
        terms = dict(self._terms)
        for m, c in other._terms.items():
            terms[m] = terms.get(m, Fraction(0)) + c
        return Polynomial(terms)

    def __sub__(self, other):
        terms = dict(self._terms)
        for m, c in other._terms.items():
            terms[m] = terms.get(m, Fraction(0)) - c
        return Polynomial(terms)

    def __neg__(self):
        return Polynomial({m: -c for m, c in self._terms.items()})

    def __mul__(self, other):
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mul_monomials(m1, m2)
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return Polynomial(out)

    def __pow__(self, exponent: int):
        if exponent < 0:
            raise ValueError("polynomial powers must be natural numbers")
        result = Polynomial.constant(1)
        base = self
        e = exponent
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    def scale(self, c: Rational) -> "Polynomial":
        c = Fraction(c)
        return Polynomial({m: coeff * c for m, coeff in self._terms.items()})

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return not self._terms or (len(self._terms) == 1 and () in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("polynomial is not constant: %s" % self)
        return self._terms.get((), Fraction(0))

    def variables(self) -> set:
        out = set()
        for m in self._terms:
            for name, _ in m:
                out.add(name)
        return out

    def degree_in(self, v: str) -> int:
        best = 0
        for m in self._terms:
            for name, e in m:
                if name == v and e > best:
                    best = e
        return best

    def total_degree(self) -> int:
        best = 0
        for m in self._terms:
            d = sum(e for _, e in m)
            if d > best:
                best = d
        return best

    def coefficients_in(self, v: str) -> dict:
        """Split into {power of v: polynomial over the other variables}."""
        out: dict = {}
        for m, c in self._terms.items():
            e_v = 0
            rest = []
            for name, e in m:
                if name == v:
                    e_v = e
                else:
                    rest.append((name, e))
            bucket = out.setdefault(e_v, {})
            key = tuple(rest)
            bucket[key] = bucket.get(key, Fraction(0)) + c
        return {e: Polynomial(t) for e, t in out.items()}

    def substitute(self, v: str, replacement: "Polynomial") -> "Polynomial":
        """Substitute a polynomial for `v` (Horner evaluation in v)."""
        parts = self.coefficients_in(v)
        if not parts:
            return Polynomial.zero()
        result = Polynomial.zero()
        for power in range(max(parts), -1, -1):
            result = result * replacement + parts.get(power, Polynomial.zero())
        return result

    def antiderivative(self, v: str) -> "Polynomial":
        out: dict = {}
        for m, c in self._terms.items():
            e_v = 0
            rest = []
            for name, e in m:
                if name == v:
                    e_v = e
                else:
                    rest.append((name, e))
            rest.append((v, e_v + 1))
            rest.sort()
            m2 = tuple(rest)
            out[m2] = out.get(m2, Fraction(0)) + c / (e_v + 1)
        return Polynomial(out)

    def evaluate(self, assignment: Mapping[str, Rational]) -> Fraction:
        total = Fraction(0)
        for m, c in self._terms.items():
            term = c
            for name, e in m:
                try:
                    term *= Fraction(assignment[name]) ** e
                except KeyError:
                    raise UnboundVariable("no value for variable %r" % name) from None
            total += term
        return total

    def leading(self) -> tuple:
        """The (monomial, coefficient) pair of the order-maximal monomial."""
        if not self._terms:
            raise ValueError("the zero polynomial has no leading term")
        m = max(self._terms)
        return m, self._terms[m]

    def terms(self) -> Iterator[tuple]:
        return iter(sorted(self._terms.items()))

    def to_expr(self) -> Expr:
        """Rebuild an expression tree, one addend per monomial."""
        if not self._terms:
            return ZERO
        addends = []
        for m, c in sorted(self._terms.items()):
            factors = []
            if c != 1 or not m:
                factors.append(const(c))
            for name, e in m:
                factors.append(var(name) if e == 1 else pow_(var(name), e))
            addends.append(mul(*factors))
        return add(*addends)

    def __str__(self):
        return format_expr(self.to_expr())

    def __repr__(self):
        return "Polynomial(%s)" % self


def _mul_monomials(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    exps: dict = {}
    for name, e in m1:
        exps[name] = exps.get(name, 0) + e
    for name, e in m2:
        exps[name] = exps.get(name, 0) + e
    return tuple(sorted(exps.items()))


def to_polynomial(e: Expr) -> Polynomial:
    """Rewrite an expression as a polynomial.

    Raises NotPolynomial when the expression divides by a non-constant or
    by zero; everything else in the expression grammar is polynomial by
    construction.
    """
    if e.kind == CONST:
        return Polynomial.constant(e.value)
    if e.kind == VAR:
        return Polynomial.variable(e.value)
    if e.kind == ADD:
        total = Polynomial.zero()
        for a in e.args:
            total = total + to_polynomial(a)
        return total
    if e.kind == SUB:
        return to_polynomial(e.args[0]) - to_polynomial(e.args[1])
    if e.kind == MUL:
        total = Polynomial.constant(1)
        for a in e.args:
            total = total * to_polynomial(a)
        return total
    if e.kind == DIV:
        denom = to_polynomial(e.args[1])
        if not denom.is_constant():
            raise NotPolynomial("non-constant denominator in %s" % e)
        d = denom.constant_value()
        if d == 0:
            raise NotPolynomial("zero denominator in %s" % e)
        return to_polynomial(e.args[0]).scale(Fraction(1) / d)
    if e.kind == POW:
        return to_polynomial(e.args[0]) ** e.value
    raise ValueError("unknown expression kind %r" % e.kind)


def is_polynomial(e: Expr) -> bool:
    try:
        to_polynomial(e)
        return True
    except NotPolynomial:
        return False


# ---------------------------------------------------------------------------
# Bounds

@dataclass(frozen=True)
class Bound:
    """A one-sided constraint on `subject`: lower is value < subject
    (or <= when non-strict), upper is subject < value."""

    subject: str
    direction: str  # LOWER or UPPER
    strict: bool
    value: Expr

    def negated(self) -> "Bound":
        """The complement: flip side and strictness, keep the value."""
        other = UPPER if self.direction == LOWER else LOWER
        return Bound(self.subject, other, not self.strict, self.value)

    def holds(self, assignment: Mapping[str, Rational]) -> bool:
        x = Fraction(assignment[self.subject])
        v = evaluate(self.value, assignment)
        if self.direction == LOWER:
            return v < x if self.strict else v <= x
        return x < v if self.strict else x <= v

    def __str__(self):
        if self.direction == LOWER:
            op = "<" if self.strict else "<="
            return "(%s %s %s)" % (op, format_expr(self.value), self.subject)
        op = "<" if self.strict else "<="
        return "(%s %s %s)" % (op, self.subject, format_expr(self.value))


def negate_bound(b: Bound) -> Bound:
    return b.negated()


@dataclass(frozen=True)
class CaseSplit:
    """The sign split produced when an atom is linear in its leading
    variable with a symbolic coefficient.

    The atom is equivalent to
        (coefficient > 0 -> positive) and
        (coefficient < 0 -> negative) and
        (coefficient = 0 -> zero_case)
    where the two bounds divide by the coefficient symbolically.
    `zero_case` is either a truth constant or a leftover comparison
    (op, lhs, rhs) that no longer mentions the subject.
    """

    subject: str
    coefficient: Expr
    positive: Bound
    negative: Bound
    zero_case: object


_COMPARISON_OPS = ("<", "<=", ">", ">=", "=")


def solve_for(op: str, lhs: Expr, rhs: Expr, v: str):
    """Solve the comparison `lhs op rhs` for variable `v`.

    Returns a Bound when the coefficient of `v` is a non-zero constant,
    and a CaseSplit when it is symbolic.  Raises NotSeparable when the
    atom is not linear in `v`.  Equality atoms are rejected here; they
    are split into their two one-sided halves before solving.
    """
    if op not in _COMPARISON_OPS:
        raise ValueError("unknown comparison operator %r" % op)
    if op == "=":
        raise ValueError("equality atoms must be split into <= and >= first")
    # Normalise to p < 0 or p <= 0 with p = lhs - rhs.
    p = to_polynomial(lhs) - to_polynomial(rhs)
    if op in (">", ">="):
        p = -p
    strict = op in ("<", ">")
    if p.degree_in(v) != 1:
        raise NotSeparable(
            "atom is not linear in %s: %s %s %s" % (v, lhs, op, rhs)
        )
    parts = p.coefficients_in(v)
    coeff = parts[1]
    rest = parts.get(0, Polynomial.zero())
    if coeff.is_constant():
        c = coeff.constant_value()
        value = rest.scale(Fraction(-1) / c).to_expr()
        # c*v + rest < 0  <=>  v < -rest/c  (c > 0), flipped for c < 0.
        direction = UPPER if c > 0 else LOWER
        return Bound(v, direction, strict, value)
    # Symbolic coefficient: divide through and split on its sign.  Keep the
    # coefficient's leading sign positive so the split comes out in its
    # natural orientation; flipping it also flips the comparison.
    _, lc = coeff.leading()
    flipped = lc < 0
    if flipped:
        coeff = -coeff
        rest = -rest
    coeff_expr = coeff.to_expr()
    value = div((-rest).to_expr(), coeff_expr)
    if flipped:
        # coeff*v + rest > 0:  coeff > 0 gives a lower bound.
        positive = Bound(v, LOWER, strict, value)
        negative = Bound(v, UPPER, strict, value)
        zero_op = ">" if strict else ">="
    else:
        # coeff*v + rest < 0:  coeff > 0 gives an upper bound.
        positive = Bound(v, UPPER, strict, value)
        negative = Bound(v, LOWER, strict, value)
        zero_op = "<" if strict else "<="
    zero_case: object
    if rest.is_constant():
        r = rest.constant_value()
        if zero_op == ">":
            zero_case = r > 0
        elif zero_op == ">=":
            zero_case = r >= 0
        elif zero_op == "<":
            zero_case = r < 0
        else:
            zero_case = r <= 0
    else:
        zero_case = (zero_op, rest.to_expr(), ZERO)
    return CaseSplit(v, coeff_expr, positive, negative, zero_case)


# ---------------------------------------------------------------------------
# Symbolic integration

def integrate_polynomial(p: Polynomial, v: str, lo: Polynomial, hi: Polynomial) -> Polynomial:
    """The definite integral of `p` dv from `lo` to `hi`, both polynomial."""
    f = p.antiderivative(v)
    return f.substitute(v, hi) - f.substitute(v, lo)


def integrate_poly(p: Expr, v: str, lo: Expr, hi: Expr) -> Expr:
    """Expression-level wrapper around integrate_polynomial.

    Bounds that are not polynomial raise NotPolynomial; callers that can
    fall back to numeric integration catch that.
    """
    return integrate_polynomial(
        to_polynomial(p), v, to_polynomial(lo), to_polynomial(hi)
    ).to_expr()
