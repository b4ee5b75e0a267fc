"""Hybrid problems: atoms, formulas, weights, and the text format.

A problem couples declarations of boolean and real variables with a
formula over boolean atoms and polynomial comparisons, plus a weight
table mapping literals to density expressions.  Atom identity is
structural: comparisons are normalised to `poly (<|<=|=) 0` with the
leading coefficient scaled to +-1, so `(< x1 3)` and `(> 3 x1)` are the
same atom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from . import expr as ex
from .errors import (
    DivisionByZero,
    NotPolynomial,
    ParseError,
    TheoryMismatch,
    UndeclaredVariable,
)
from .expr import Expr, Polynomial, to_polynomial

LRA = "lra"
NRA = "nra"


# ---------------------------------------------------------------------------
# Atoms

@dataclass(frozen=True)
class BoolAtom:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Comparison:
    op: str  # < <= > >= =
    lhs: Expr
    rhs: Expr

    def __str__(self):
        return "(%s %s %s)" % (self.op, ex.format_expr(self.lhs), ex.format_expr(self.rhs))


Atom = Union[BoolAtom, Comparison]

_FLIP = {">": "<", ">=": "<="}


def canonical_comparison(atom: Comparison):
    """Normalise a comparison to (op, polynomial) with op in {<, <=, =}.

    Returns ("const", truth) when every variable cancels.  The polynomial
    is scaled so its leading coefficient has absolute value one (exactly
    one for equalities, which are symmetric under negation).
    """
    p = to_polynomial(atom.lhs) - to_polynomial(atom.rhs)
    op = _FLIP.get(atom.op, atom.op)
    if op != atom.op:
        p = -p
    if p.is_constant():
        c = p.constant_value()
        truth = {"<": c < 0, "<=": c <= 0, "=": c == 0}[op]
        return ("const", truth)
    _, lc = p.leading()
    scale = Fraction(1) / (lc if op == "=" else abs(lc))
    return (op, p.scale(scale))


def atom_key(atom: Atom):
    """A hashable identity for an atom, used for dedup and weight lookup.

    Comparisons that cannot be normalised to a polynomial (the quotient
    bounds minted by case splits) fall back to structural identity.
    """
    if isinstance(atom, BoolAtom):
        return ("bool", atom.name)
    try:
        kind, payload = canonical_comparison(atom)
    except NotPolynomial:
        return ("nonpoly", atom.op, atom.lhs, atom.rhs)
    if kind == "const":
        return ("const", payload)
    return (kind, payload.key())


def atom_truth(atom: Atom, point: Mapping[str, object], bools: Mapping[str, bool]) -> bool:
    """Evaluate an atom at a real point plus a boolean assignment.

    Quotient atoms whose denominator vanishes at the point evaluate to
    False; in any formula this package builds, such atoms only occur
    under a guard that is False at the same point.
    """
    if isinstance(atom, BoolAtom):
        return bool(bools[atom.name])
    try:
        l = ex.evaluate(atom.lhs, point)
        r = ex.evaluate(atom.rhs, point)
    except DivisionByZero:
        return False
    return {"<": l < r, "<=": l <= r, ">": l > r, ">=": l >= r, "=": l == r}[atom.op]


def comparison_degree(atom: Comparison) -> int:
    p = to_polynomial(atom.lhs) - to_polynomial(atom.rhs)
    return p.total_degree()


# ---------------------------------------------------------------------------
# Formulas

F_ATOM = "atom"
F_CONST = "const"
F_NOT = "not"
F_AND = "and"
F_OR = "or"
F_IMPLIES = "=>"
F_IFF = "iff"


@dataclass(frozen=True)
class Formula:
    kind: str
    atom: Optional[Atom] = None
    value: Optional[bool] = None
    children: tuple = ()

    def evaluate(self, point: Mapping[str, object], bools: Mapping[str, bool]) -> bool:
        if self.kind == F_ATOM:
            return atom_truth(self.atom, point, bools)
        if self.kind == F_CONST:
            return self.value
        if self.kind == F_NOT:
            return not self.children[0].evaluate(point, bools)
        if self.kind == F_AND:
            return all(c.evaluate(point, bools) for c in self.children)
        if self.kind == F_OR:
            return any(c.evaluate(point, bools) for c in self.children)
        if self.kind == F_IMPLIES:
            return (not self.children[0].evaluate(point, bools)) or \
                self.children[1].evaluate(point, bools)
        if self.kind == F_IFF:
            return self.children[0].evaluate(point, bools) == \
                self.children[1].evaluate(point, bools)
        raise ValueError("unknown formula kind %r" % self.kind)

    def __str__(self):
        return format_formula(self)


F_TRUE = Formula(F_CONST, value=True)
F_FALSE = Formula(F_CONST, value=False)


def f_atom(atom: Atom) -> Formula:
    return Formula(F_ATOM, atom=atom)


def f_const(value: bool) -> Formula:
    return F_TRUE if value else F_FALSE


def f_not(f: Formula) -> Formula:
    return Formula(F_NOT, children=(f,))


def f_and(*fs: Formula) -> Formula:
    if not fs:
        return F_TRUE
    if len(fs) == 1:
        return fs[0]
    return Formula(F_AND, children=tuple(fs))


def f_or(*fs: Formula) -> Formula:
    if not fs:
        return F_FALSE
    if len(fs) == 1:
        return fs[0]
    return Formula(F_OR, children=tuple(fs))


def f_implies(a: Formula, b: Formula) -> Formula:
    return Formula(F_IMPLIES, children=(a, b))


def f_iff(a: Formula, b: Formula) -> Formula:
    return Formula(F_IFF, children=(a, b))


def f_comparison(op: str, lhs: Expr, rhs: Expr) -> Formula:
    return f_atom(Comparison(op, lhs, rhs))


def atoms_of(f: Formula) -> list:
    """Distinct atoms in first-occurrence order, deduplicated by atom_key."""
    seen = set()
    out = []
    stack = [f]
    while stack:
        node = stack.pop()
        if node.kind == F_ATOM:
            key = atom_key(node.atom)
            if key not in seen:
                seen.add(key)
                out.append(node.atom)
        else:
            stack.extend(reversed(node.children))
    return out


# ---------------------------------------------------------------------------
# Weights

UNIT_WEIGHT = ex.ONE


class WeightTable:
    """Literal weights: a map from (atom identity, polarity) to a density.

    Unmentioned literals weigh one.  The table remembers the first
    syntactic form of each atom for printing.
    """

    def __init__(self):
        self._entries: dict = {}
        self._display: dict = {}
        self._poly_memo: dict = {}
        self._unit_memo: dict = {}

    def set_weight(self, atom: Atom, polarity: bool, value: Expr):
        key = atom_key(atom)
        if key[0] == "const":
            raise ParseError("weight attached to a constant atom %s" % atom)
        if (key, polarity) in self._entries:
            lit = str(atom) if polarity else "(not %s)" % atom
            raise ParseError("duplicate weight for literal %s" % lit)
        self._entries[(key, polarity)] = value
        self._display.setdefault(key, atom)
        self._unit_memo.pop(key, None)

    def weight(self, key, polarity: bool) -> Expr:
        return self._entries.get((key, polarity), UNIT_WEIGHT)

    def poly_weight(self, key, polarity: bool):
        """The literal's weight as a polynomial, or None when it is the
        implicit unit weight."""
        entry = (key, polarity)
        if entry not in self._entries:
            return None
        got = self._poly_memo.get(entry)
        if got is None:
            got = to_polynomial(self._entries[entry])
            self._poly_memo[entry] = got
        return got

    def mentions(self, key) -> bool:
        return (key, True) in self._entries or (key, False) in self._entries

    def is_unit(self, key) -> bool:
        """True when both polarities of the atom weigh exactly one."""
        got = self._unit_memo.get(key)
        if got is None:
            got = True
            for pol in (True, False):
                w = self._entries.get((key, pol))
                if w is not None and w != UNIT_WEIGHT:
                    try:
                        if to_polynomial(w) != Polynomial.constant(1):
                            got = False
                    except NotPolynomial:
                        got = False
            self._unit_memo[key] = got
        return got

    def items(self):
        return self._entries.items()

    def atom_keys(self):
        """Distinct atom identities mentioned by the table, in insertion
        order."""
        seen = []
        for key, _pol in self._entries:
            if key not in seen:
                seen.append(key)
        return seen

    def display_atom(self, key) -> Atom:
        return self._display[key]

    def __len__(self):
        return len(self._entries)


# ---------------------------------------------------------------------------
# Problems

@dataclass
class Problem:
    theory: str
    bool_vars: tuple
    real_vars: tuple
    formula: Formula
    weights: WeightTable = field(default_factory=WeightTable)

    def atoms(self) -> list:
        return atoms_of(self.formula)

    def conjoin(self, f: Formula) -> "Problem":
        """A new problem with `f` conjoined; declarations and weights shared."""
        out = Problem(self.theory, self.bool_vars, self.real_vars,
                      f_and(self.formula, f), self.weights)
        validate_problem(out)
        return out


def validate_problem(p: Problem):
    """Check declarations and the declared theory against every atom."""
    declared_bool = set(p.bool_vars)
    declared_real = set(p.real_vars)
    for atom in p.atoms():
        if isinstance(atom, BoolAtom):
            if atom.name not in declared_bool:
                raise UndeclaredVariable("undeclared boolean variable %r" % atom.name)
            continue
        for name in atom.lhs.variables() | atom.rhs.variables():
            if name not in declared_real:
                raise UndeclaredVariable("undeclared real variable %r" % name)
        if p.theory == LRA:
            try:
                degree = comparison_degree(atom)
            except NotPolynomial:
                raise TheoryMismatch("atom %s is not polynomial" % atom) from None
            if degree > 1:
                raise TheoryMismatch(
                    "atom %s is non-linear but the problem declares theory lra" % atom)


# ---------------------------------------------------------------------------
# Parsing

_KEYWORDS = {"theory", "var", "formula", "weight", "bool", "real",
             "and", "or", "not", "iff", "true", "false",
             "+", "-", "*", "/", "^", "<", "<=", ">", ">=", "=", "=>"}


class _Token:
    __slots__ = ("text", "line", "column")

    def __init__(self, text, line, column):
        self.text = text
        self.line = line
        self.column = column


def _tokenize(text: str):
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


def _parse_sexprs(tokens):
    """Group a token stream into nested lists.

    A list is represented as (opening token, children); bare atoms stay
    as _Token so every node knows its source position.
    """
    out = []
    stack = [out]
    openers = []
    for tok in tokens:
        if tok.text == "(":
            node = []
            stack[-1].append((tok, node))
            stack.append(node)
            openers.append(tok)
        elif tok.text == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", tok.line, tok.column)
            stack.pop()
            openers.pop()
        else:
            stack[-1].append(tok)
    if openers:
        tok = openers[-1]
        raise ParseError("unclosed '('", tok.line, tok.column)
    return out


def _parse_rational(tok: _Token) -> Optional[Fraction]:
    t = tok.text
    if not t or t[0] not in "0123456789-." or t == "-":
        return None
    try:
        return Fraction(t)
    except (ValueError, ZeroDivisionError):
        raise ParseError("malformed number %r" % t, tok.line, tok.column) from None


class _Parser:
    def __init__(self, text: str):
        self.forms = _parse_sexprs(_tokenize(text))
        self.bool_vars: list = []
        self.real_vars: list = []

    # -- arithmetic -------------------------------------------------------

    def parse_arith(self, node) -> Expr:
        if isinstance(node, _Token):
            value = _parse_rational(node)
            if value is not None:
                return ex.const(value)
            name = node.text
            if name in self.real_vars:
                return ex.var(name)
            if name in self.bool_vars:
                raise ParseError(
                    "boolean variable %r used in arithmetic" % name, node.line, node.column)
            raise UndeclaredVariable(
                "undeclared variable %r" % name, node.line, node.column)
        opener, items = node
        if not items or not isinstance(items[0], _Token):
            raise ParseError("expected an operator", opener.line, opener.column)
        head = items[0]
        op, args = head.text, items[1:]
        if op == "+":
            self._need(head, len(args) >= 1, "(+ ...) needs at least one argument")
            return ex.add(*[self.parse_arith(a) for a in args])
        if op == "-":
            self._need(head, len(args) == 2, "(- ...) takes exactly two arguments")
            return ex.sub(self.parse_arith(args[0]), self.parse_arith(args[1]))
        if op == "*":
            self._need(head, len(args) >= 1, "(* ...) needs at least one argument")
            return ex.mul(*[self.parse_arith(a) for a in args])
        if op == "/":
            self._need(head, len(args) == 2, "(/ ...) takes exactly two arguments")
            num = self.parse_arith(args[0])
            den = self.parse_arith(args[1])
            try:
                d = to_polynomial(den)
                constant = d.is_constant()
                zero = constant and d.constant_value() == 0
            except NotPolynomial:
                constant, zero = False, False
            if not constant:
                raise ParseError("denominator must be a non-zero constant",
                                 head.line, head.column)
            if zero:
                raise ParseError("division by zero", head.line, head.column)
            return ex.div(num, den)
        if op == "^":
            self._need(head, len(args) == 2, "(^ ...) takes a base and an exponent")
            base = self.parse_arith(args[0])
            etok = args[1]
            if not isinstance(etok, _Token) or not etok.text.isdigit():
                where = etok if isinstance(etok, _Token) else etok[0]
                raise ParseError("exponent must be a natural number", where.line, where.column)
            return ex.pow_(base, int(etok.text))
        raise ParseError("unknown arithmetic operator %r" % op, head.line, head.column)

    # -- formulas ---------------------------------------------------------

    def parse_formula(self, node) -> Formula:
        if isinstance(node, _Token):
            name = node.text
            if name == "true":
                return F_TRUE
            if name == "false":
                return F_FALSE
            if name in self.bool_vars:
                return f_atom(BoolAtom(name))
            if name in self.real_vars:
                raise ParseError(
                    "real variable %r used as a formula" % name, node.line, node.column)
            raise UndeclaredVariable(
                "undeclared variable %r" % name, node.line, node.column)
        opener, items = node
        if not items or not isinstance(items[0], _Token):
            raise ParseError("expected a connective", opener.line, opener.column)
        head = items[0]
        op, args = head.text, items[1:]
        if op == "not":
            self._need(head, len(args) == 1, "(not ...) takes one argument")
            return f_not(self.parse_formula(args[0]))
        if op == "and":
            self._need(head, len(args) >= 1, "(and ...) needs at least one argument")
            return f_and(*[self.parse_formula(a) for a in args])
        if op == "or":
            self._need(head, len(args) >= 1, "(or ...) needs at least one argument")
            return f_or(*[self.parse_formula(a) for a in args])
        if op == "=>":
            self._need(head, len(args) == 2, "(=> ...) takes two arguments")
            return f_implies(self.parse_formula(args[0]), self.parse_formula(args[1]))
        if op == "iff":
            self._need(head, len(args) == 2, "(iff ...) takes two arguments")
            return f_iff(self.parse_formula(args[0]), self.parse_formula(args[1]))
        if op in ("<", "<=", ">", ">=", "="):
            self._need(head, len(args) == 2, "(%s ...) takes two arguments" % op)
            return f_comparison(op, self.parse_arith(args[0]), self.parse_arith(args[1]))
        raise ParseError("unknown connective %r" % op, head.line, head.column)

    def parse_atom(self, node) -> Atom:
        f = self.parse_formula(node)
        if f.kind != F_ATOM:
            where = node if isinstance(node, _Token) else node[0]
            raise ParseError("expected an atom", where.line, where.column)
        return f.atom

    @staticmethod
    def _need(tok: _Token, ok: bool, message: str):
        if not ok:
            raise ParseError(message, tok.line, tok.column)


def parse_problem(text: str) -> Problem:
    """Parse a full problem file."""
    parser = _Parser(text)
    theory = None
    formula = None
    weights = WeightTable()
    pending_weights = []
    for form in parser.forms:
        if isinstance(form, _Token):
            raise ParseError("expected a clause in parentheses", form.line, form.column)
        opener, items = form
        if not items or not isinstance(items[0], _Token):
            raise ParseError("expected a clause keyword", opener.line, opener.column)
        head = items[0]
        keyword, args = head.text, items[1:]
        if keyword == "theory":
            if theory is not None:
                raise ParseError("duplicate theory clause", head.line, head.column)
            if len(args) != 1 or not isinstance(args[0], _Token) or \
                    args[0].text not in (LRA, NRA):
                raise ParseError("theory must be lra or nra", head.line, head.column)
            theory = args[0].text
        elif keyword == "var":
            if len(args) != 2 or not isinstance(args[0], _Token) or \
                    not isinstance(args[1], _Token):
                raise ParseError("var clause is (var bool|real NAME)", head.line, head.column)
            sort, name = args[0].text, args[1].text
            if sort not in ("bool", "real"):
                raise ParseError("variable sort must be bool or real",
                                 args[0].line, args[0].column)
            if name in _KEYWORDS or _parse_rational(args[1]) is not None:
                raise ParseError("illegal variable name %r" % name,
                                 args[1].line, args[1].column)
            if name in parser.bool_vars or name in parser.real_vars:
                raise ParseError("duplicate variable %r" % name,
                                 args[1].line, args[1].column)
            (parser.bool_vars if sort == "bool" else parser.real_vars).append(name)
        elif keyword == "formula":
            if formula is not None:
                raise ParseError("duplicate formula clause", head.line, head.column)
            if len(args) != 1:
                raise ParseError("formula clause takes one expression",
                                 head.line, head.column)
            formula = parser.parse_formula(args[0])
        elif keyword == "weight":
            if len(args) != 2:
                raise ParseError("weight clause is (weight LIT EXPR)",
                                 head.line, head.column)
            pending_weights.append((head, args[0], args[1]))
        else:
            raise ParseError("unknown clause %r" % keyword, head.line, head.column)
    if formula is None:
        raise ParseError("missing formula clause")
    for head, lit_node, value_node in pending_weights:
        polarity = True
        target = lit_node
        if not isinstance(lit_node, _Token):
            _, lit_items = lit_node
            if lit_items and isinstance(lit_items[0], _Token) and lit_items[0].text == "not":
                if len(lit_items) != 2:
                    raise ParseError("(not ...) takes one argument",
                                     lit_items[0].line, lit_items[0].column)
                polarity = False
                target = lit_items[1]
        atom = parser.parse_atom(target)
        weights.set_weight(atom, polarity, parser.parse_arith(value_node))
    problem = Problem(theory or LRA, tuple(parser.bool_vars), tuple(parser.real_vars),
                      formula, weights)
    validate_problem(problem)
    _validate_weight_atoms(problem)
    return problem


def _validate_weight_atoms(p: Problem):
    if p.theory == NRA:
        return
    for (key, _pol), _w in p.weights.items():
        atom = p.weights.display_atom(key)
        if isinstance(atom, Comparison) and comparison_degree(atom) > 1:
            raise TheoryMismatch(
                "weight atom %s is non-linear but the problem declares theory lra" % atom)


def parse_query(text: str, problem: Problem) -> Formula:
    """Parse a query/evidence file: one (formula ...) clause reusing the
    problem's declarations."""
    parser = _Parser(text)
    parser.bool_vars = list(problem.bool_vars)
    parser.real_vars = list(problem.real_vars)
    forms = parser.forms
    if len(forms) != 1 or isinstance(forms[0], _Token):
        raise ParseError("expected exactly one (formula ...) clause")
    opener, items = forms[0]
    if not items or not isinstance(items[0], _Token) or items[0].text != "formula" \
            or len(items) != 2:
        raise ParseError("expected exactly one (formula ...) clause",
                         opener.line, opener.column)
    return parser.parse_formula(items[1])


# ---------------------------------------------------------------------------
# Printing

def format_formula(f: Formula) -> str:
    if f.kind == F_ATOM:
        return str(f.atom)
    if f.kind == F_CONST:
        return "true" if f.value else "false"
    if f.kind == F_NOT:
        return "(not %s)" % format_formula(f.children[0])
    return "(%s %s)" % (f.kind, " ".join(format_formula(c) for c in f.children))


def print_problem(p: Problem) -> str:
    lines = ["(theory %s)" % p.theory]
    for name in p.bool_vars:
        lines.append("(var bool %s)" % name)
    for name in p.real_vars:
        lines.append("(var real %s)" % name)
    lines.append("(formula %s)" % format_formula(p.formula))
    for (key, polarity), value in p.weights.items():
        atom = p.weights.display_atom(key)
        lit = str(atom) if polarity else "(not %s)" % atom
        lines.append("(weight %s %s)" % (lit, ex.format_expr(value)))
    return "\n".join(lines) + "\n"
