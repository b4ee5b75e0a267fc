"""Predicate abstraction: atoms become propositions with refinements.

Each comparison is solved for its leading real variable (the
order-minimal variable it mentions), yielding a one-sided bound whose
value only references later variables.  Atoms that are linear in the
leading variable but carry a symbolic coefficient are replaced by a sign
split: guard propositions on the coefficient's sign plus quotient bounds
valid under each guard.  Equalities split into their two one-sided
halves.  The result is a propositional formula over dense ids plus a map
from ids back to atoms and bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from . import prop as pr
from .errors import NotPolynomial
from .expr import LOWER, Bound, CaseSplit, ZERO, solve_for, to_polynomial, var
from .problem import (
    Atom,
    BoolAtom,
    Comparison,
    F_ATOM,
    F_CONST,
    Formula,
    Problem,
    atom_key,
    atom_truth,
)


class VarOrder:
    """A total order over the real variables.

    Bounds for a variable may only mention strictly later variables, so
    integration proceeds along this order, first variable innermost.
    """

    def __init__(self, names: Iterable[str]):
        self.names = tuple(names)
        self._rank = {n: i for i, n in enumerate(self.names)}
        if len(self._rank) != len(self.names):
            raise ValueError("duplicate variable in order")

    @classmethod
    def from_problem(cls, problem: Problem, source: str = "lex") -> "VarOrder":
        if source == "lex":
            return cls(sorted(problem.real_vars))
        if source == "declared":
            return cls(problem.real_vars)
        raise ValueError("unknown order source %r" % source)

    def rank(self, name: str) -> int:
        return self._rank[name]

    def leading(self, names: Iterable[str]) -> str:
        """The order-minimal variable among `names`."""
        return min(names, key=self.rank)

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)


def choose_leading_var(atom: Comparison, order: VarOrder) -> str:
    """The order-minimal variable the atom really constrains.

    Variables whose coefficients cancel during normalisation do not
    count, so `(< (* 0 x1) x2)` leads with x2.
    """
    try:
        names = (to_polynomial(atom.lhs) - to_polynomial(atom.rhs)).variables()
    except NotPolynomial:
        names = atom.lhs.variables() | atom.rhs.variables()
    if not names:
        raise ValueError("atom %s mentions no variable" % atom)
    return order.leading(names)


@dataclass(frozen=True)
class Refinement:
    """What a proposition stands for.

    Pure boolean propositions have no bound; every other proposition
    carries the one-sided bound its truth imposes on `lead_var`.
    """

    prop_id: int
    atom: Atom
    lead_var: Optional[str] = None
    bound: Optional[Bound] = None

    @property
    def is_bool(self) -> bool:
        return self.bound is None


class AbstractionMap:
    """The two-way map between propositions and their refinements."""

    def __init__(self, order: VarOrder):
        self.order = order
        self.refinements: list = []
        self.keys: list = []  # atom identity per prop id
        self._ids: dict = {}
        # Atoms replaced by a sign split: atom identity -> replacement
        # formula, so their weights can still be evaluated per model.
        self.split_replacements: dict = {}

    @property
    def n_props(self) -> int:
        return len(self.refinements)

    def refinement(self, prop_id: int) -> Refinement:
        return self.refinements[prop_id]

    def id_for(self, key) -> Optional[int]:
        return self._ids.get(key)

    def register(self, key, atom: Atom, lead_var=None, bound=None) -> int:
        existing = self._ids.get(key)
        if existing is not None:
            return existing
        prop_id = len(self.refinements)
        self.refinements.append(Refinement(prop_id, atom, lead_var, bound))
        self.keys.append(key)
        self._ids[key] = prop_id
        return prop_id

    def by_lead_var(self, name: str) -> list:
        return [r for r in self.refinements if r.lead_var == name]

    def bounded_ids(self) -> list:
        return [r.prop_id for r in self.refinements if r.bound is not None]

    def induced_assignment(self, point: Mapping, bools: Mapping) -> dict:
        """Truth of every refinement atom at a hybrid point."""
        return {r.prop_id: atom_truth(r.atom, point, bools)
                for r in self.refinements}


def _bound_atom(bound: Bound) -> Comparison:
    op = "<" if bound.strict else "<="
    if bound.direction == LOWER:
        return Comparison(op, bound.value, var(bound.subject))
    return Comparison(op, var(bound.subject), bound.value)


def abstract(problem: Problem, order: Optional[VarOrder] = None):
    """Abstract a problem into (propositional formula, AbstractionMap)."""
    if order is None:
        order = VarOrder.from_problem(problem)
    amap = AbstractionMap(order)

    def visit(f: Formula) -> pr.PropFormula:
        if f.kind == F_ATOM:
            return handle_atom(f.atom)
        if f.kind == F_CONST:
            return pr.p_const(f.value)
        children = tuple(visit(c) for c in f.children)
        return pr.PropFormula(f.kind, None, children)

    def handle_atom(atom: Atom) -> pr.PropFormula:
        key = atom_key(atom)
        if key[0] == "const":
            return pr.p_const(key[1])
        if key in amap.split_replacements:
            return amap.split_replacements[key]
        existing = amap.id_for(key)
        if existing is not None:
            return pr.p_prop(existing)
        if isinstance(atom, BoolAtom):
            return pr.p_prop(amap.register(key, atom))
        if atom.op == "=":
            # A two-sided bound: one proposition per side.
            left = handle_atom(Comparison("<=", atom.lhs, atom.rhs))
            right = handle_atom(Comparison(">=", atom.lhs, atom.rhs))
            return pr.p_and(left, right)
        lead = choose_leading_var(atom, order)
        solved = solve_for(atom.op, atom.lhs, atom.rhs, lead)
        if isinstance(solved, Bound):
            return pr.p_prop(amap.register(key, atom, lead, solved))
        return handle_split(key, solved)

    def handle_split(key, split: CaseSplit) -> pr.PropFormula:
        guard_pos = handle_atom(Comparison(">", split.coefficient, ZERO))
        pos_atom = _bound_atom(split.positive)
        bound_pos = pr.p_prop(amap.register(
            atom_key(pos_atom), pos_atom, split.subject, split.positive))
        guard_neg = handle_atom(Comparison("<", split.coefficient, ZERO))
        neg_atom = _bound_atom(split.negative)
        bound_neg = pr.p_prop(amap.register(
            atom_key(neg_atom), neg_atom, split.subject, split.negative))
        if isinstance(split.zero_case, bool):
            zero = pr.p_const(split.zero_case)
        else:
            zop, zlhs, zrhs = split.zero_case
            zero = handle_atom(Comparison(zop, zlhs, zrhs))
        replacement = pr.p_and(
            pr.p_implies(guard_pos, bound_pos),
            pr.p_implies(guard_neg, bound_neg),
            pr.p_implies(pr.p_and(pr.p_not(guard_pos), pr.p_not(guard_neg)), zero),
        )
        amap.split_replacements[key] = replacement
        return replacement

    pkb = visit(problem.formula)
    # Atoms that only appear in the weight table still partition space,
    # so register them; they become don't-cares of every model and the
    # integrator expands them like any other weighted proposition.
    for key in problem.weights.atom_keys():
        if amap.id_for(key) is None and key not in amap.split_replacements:
            handle_atom(problem.weights.display_atom(key))
    return pkb, amap
