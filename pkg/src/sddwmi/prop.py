"""Propositional formulas over dense integer proposition ids.

This is the language the abstraction step emits and the diagram
compiler consumes.  Nodes are immutable; `and`/`or` are n-ary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

P_CONST = "const"
P_PROP = "prop"
P_NOT = "not"
P_AND = "and"
P_OR = "or"
P_IMPLIES = "=>"
P_IFF = "iff"


@dataclass(frozen=True)
class PropFormula:
    kind: str
    value: object = None  # bool for const, int id for prop
    children: tuple = ()

    def props(self) -> set:
        out = set()
        stack = [self]
        while stack:
            f = stack.pop()
            if f.kind == P_PROP:
                out.add(f.value)
            else:
                stack.extend(f.children)
        return out

    def evaluate(self, assignment: Mapping[int, bool]) -> bool:
        if self.kind == P_CONST:
            return self.value
        if self.kind == P_PROP:
            return bool(assignment[self.value])
        if self.kind == P_NOT:
            return not self.children[0].evaluate(assignment)
        if self.kind == P_AND:
            return all(c.evaluate(assignment) for c in self.children)
        if self.kind == P_OR:
            return any(c.evaluate(assignment) for c in self.children)
        if self.kind == P_IMPLIES:
            return (not self.children[0].evaluate(assignment)) or self.children[1].evaluate(assignment)
        if self.kind == P_IFF:
            return self.children[0].evaluate(assignment) == self.children[1].evaluate(assignment)
        raise ValueError("unknown formula kind %r" % self.kind)

    def __str__(self):
        if self.kind == P_CONST:
            return "true" if self.value else "false"
        if self.kind == P_PROP:
            return "p%d" % self.value
        return "(%s %s)" % (self.kind, " ".join(str(c) for c in self.children))


P_TRUE = PropFormula(P_CONST, True)
P_FALSE = PropFormula(P_CONST, False)


def p_const(value: bool) -> PropFormula:
    return P_TRUE if value else P_FALSE


def p_prop(i: int) -> PropFormula:
    return PropFormula(P_PROP, int(i))


def p_not(f: PropFormula) -> PropFormula:
    return PropFormula(P_NOT, None, (f,))


def p_and(*fs: PropFormula) -> PropFormula:
    if not fs:
        return P_TRUE
    if len(fs) == 1:
        return fs[0]
    return PropFormula(P_AND, None, tuple(fs))


def p_or(*fs: PropFormula) -> PropFormula:
    if not fs:
        return P_FALSE
    if len(fs) == 1:
        return fs[0]
    return PropFormula(P_OR, None, tuple(fs))


def p_implies(a: PropFormula, b: PropFormula) -> PropFormula:
    return PropFormula(P_IMPLIES, None, (a, b))


def p_iff(a: PropFormula, b: PropFormula) -> PropFormula:
    return PropFormula(P_IFF, None, (a, b))
