"""Canonical sentential decision diagrams.

Nodes are hash-consed against a unique table, element lists are
compressed (no two elements share a sub) and trimmed ({(true, a)} and
{(a, true), (not a, false)} collapse to a), so structurally equal
functions are pointer-identical within one manager.  Formulas compile
by recursive apply over their syntax tree; no clausal normal form is
ever built.  Model counting and partial-model enumeration follow the
vtree scopes, charging two choices for every variable a node never
mentions.
"""

from __future__ import annotations

import sys
from typing import Iterator, Optional, Sequence

from . import prop as pr
from .errors import ResourceLimit

AND = "and"
OR = "or"

BALANCED = "balanced"
RIGHT_LINEAR = "right-linear"


class VtreeNode:
    """A node of the variable tree.  Leaves carry one variable."""

    __slots__ = ("var", "left", "right", "parent", "position", "first", "last",
                 "n_vars")

    def __init__(self, var=None, left=None, right=None):
        self.var = var
        self.left = left
        self.right = right
        self.parent = None
        self.position = -1
        self.first = -1
        self.last = -1
        self.n_vars = 1 if left is None else left.n_vars + right.n_vars
        for child in (left, right):
            if child is not None:
                child.parent = self

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def contains(self, other: "VtreeNode") -> bool:
        return self.first <= other.first and other.last <= self.last

    def __repr__(self):
        if self.is_leaf:
            return "VtreeLeaf(%r)" % (self.var,)
        return "Vtree(pos=%d, vars=%d)" % (self.position, self.n_vars)


class Vtree:
    """A full binary tree over the propositional variables."""

    def __init__(self, root: VtreeNode):
        self.root = root
        self.leaves = {}
        self._number(root, 0)

    def _number(self, node: VtreeNode, next_pos: int) -> int:
        if node.is_leaf:
            node.position = node.first = node.last = next_pos
            self.leaves[node.var] = node
            return next_pos + 1
        pos = self._number(node.left, next_pos)
        node.position = pos
        node.first = node.left.first
        pos = self._number(node.right, pos + 1)
        node.last = node.right.last
        return pos

    def leaf(self, var) -> VtreeNode:
        return self.leaves[var]

    @property
    def n_vars(self) -> int:
        return self.root.n_vars

    def depth(self) -> int:
        def go(node):
            return 0 if node.is_leaf else 1 + max(go(node.left), go(node.right))
        return go(self.root)


def build_vtree(variables: Sequence, kind: str = BALANCED) -> Vtree:
    """Build a vtree with the given left-to-right leaf order."""
    variables = list(variables)
    if not variables:
        raise ValueError("a vtree needs at least one variable")
    if len(set(variables)) != len(variables):
        raise ValueError("duplicate variables in vtree")

    def balanced(vs):
        if len(vs) == 1:
            return VtreeNode(var=vs[0])
        mid = (len(vs) + 1) // 2
        return VtreeNode(left=balanced(vs[:mid]), right=balanced(vs[mid:]))

    def right_linear(vs):
        if len(vs) == 1:
            return VtreeNode(var=vs[0])
        return VtreeNode(left=VtreeNode(var=vs[0]), right=right_linear(vs[1:]))

    if kind == BALANCED:
        return Vtree(balanced(variables))
    if kind == RIGHT_LINEAR:
        return Vtree(right_linear(variables))
    raise ValueError("unknown vtree kind %r" % kind)


class SddNode:
    """A diagram node.  Terminals have vtree None; literals sit on a
    leaf; decisions hold (prime, sub) elements on an internal node."""

    __slots__ = ("nid", "vtree", "elements", "var", "polarity", "negation")

    def __init__(self, nid, vtree=None, elements=None, var=None, polarity=None):
        self.nid = nid
        self.vtree = vtree
        self.elements = elements
        self.var = var
        self.polarity = polarity
        self.negation = None

    @property
    def is_terminal(self) -> bool:
        return self.vtree is None

    @property
    def is_literal(self) -> bool:
        return self.var is not None

    @property
    def is_decision(self) -> bool:
        return self.elements is not None

    def __repr__(self):
        if self.is_terminal:
            return "<true>" if self.polarity else "<false>"
        if self.is_literal:
            return "<%s%s>" % ("" if self.polarity else "-", self.var)
        return "<D%d:%d elems>" % (self.nid, len(self.elements))


class SddManager:
    """Owns the unique table, terminals, literals, and the apply cache."""

    def __init__(self, vtree: Vtree, node_cap: int = 10_000_000):
        self.vtree = vtree
        self.node_cap = node_cap
        self._next_id = 0
        self.false = self._fresh(polarity=False)
        self.true = self._fresh(polarity=True)
        self.false.negation = self.true
        self.true.negation = self.false
        self._literals = {}
        self._unique = {}
        self._apply_cache = {}
        # Deep diagrams on right-linear vtrees recurse past the default
        # interpreter limit.
        sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))

    def _fresh(self, vtree=None, elements=None, var=None, polarity=None) -> SddNode:
        node = SddNode(self._next_id, vtree, elements, var, polarity)
        self._next_id += 1
        return node

    @property
    def node_count(self) -> int:
        return self._next_id

    def literal(self, var, polarity: bool = True) -> SddNode:
        key = (var, polarity)
        node = self._literals.get(key)
        if node is None:
            leaf = self.vtree.leaf(var)
            node = self._fresh(vtree=leaf, var=var, polarity=polarity)
            other = self._literals.get((var, not polarity))
            if other is not None:
                node.negation = other
                other.negation = node
            self._literals[key] = node
        return node

    # -- construction -----------------------------------------------------

    def _make_decision(self, vnode: VtreeNode, elements) -> SddNode:
        """Compress, trim, and intern an element list."""
        by_sub = {}
        for prime, sub in elements:
            entry = by_sub.get(sub.nid)
            if entry is None:
                by_sub[sub.nid] = (prime, sub)
            else:
                by_sub[sub.nid] = (self.apply(entry[0], prime, OR), sub)
        merged = sorted(by_sub.values(), key=lambda e: e[0].nid)
        if len(merged) == 1:
            prime, sub = merged[0]
            if prime is self.true:
                return sub
        if len(merged) == 2:
            (p0, s0), (p1, s1) = merged
            if s0 is self.true and s1 is self.false:
                return p0
            if s1 is self.true and s0 is self.false:
                return p1
        key = (vnode.position, tuple((p.nid, s.nid) for p, s in merged))
        node = self._unique.get(key)
        if node is None:
            if self._next_id >= self.node_cap:
                raise ResourceLimit(
                    "diagram exceeded the %d-node budget" % self.node_cap)
            node = self._fresh(vtree=vnode, elements=tuple(merged))
            self._unique[key] = node
        return node

    def negate(self, a: SddNode) -> SddNode:
        if a.negation is not None:
            return a.negation
        if a.is_literal:
            return self.literal(a.var, not a.polarity)
        # Primes partition, so negating the subs negates the function.
        result = self._make_decision(
            a.vtree, [(p, self.negate(s)) for p, s in a.elements])
        a.negation = result
        result.negation = a
        return result

    def apply(self, a: SddNode, b: SddNode, op: str) -> SddNode:
        if op == AND:
            if a is self.false or b is self.false:
                return self.false
            if a is self.true:
                return b
            if b is self.true:
                return a
        else:
            if a is self.true or b is self.true:
                return self.true
            if a is self.false:
                return b
            if b is self.false:
                return a
        if a is b:
            return a
        if a.negation is b:
            return self.false if op == AND else self.true
        if a.nid > b.nid:
            a, b = b, a
        key = (op, a.nid, b.nid)
        cached = self._apply_cache.get(key)
        if cached is not None:
            return cached
        v = self._lca(a.vtree, b.vtree)
        elements = []
        for p1, s1 in self._shape(a, v):
            for p2, s2 in self._shape(b, v):
                prime = self.apply(p1, p2, AND)
                if prime is self.false:
                    continue
                elements.append((prime, self.apply(s1, s2, op)))
        result = self._make_decision(v, elements)
        self._apply_cache[key] = result
        return result

    def _shape(self, a: SddNode, v: VtreeNode):
        """View `a` as an element list normalised for vtree node `v`."""
        if a.vtree is v:
            return a.elements
        if v.left.contains(a.vtree):
            return ((a, self.true), (self.negate(a), self.false))
        return ((self.true, a),)

    @staticmethod
    def _lca(u: VtreeNode, w: VtreeNode) -> VtreeNode:
        while not u.contains(w):
            u = u.parent
        return u

    def conjoin(self, a: SddNode, b: SddNode) -> SddNode:
        return self.apply(a, b, AND)

    def disjoin(self, a: SddNode, b: SddNode) -> SddNode:
        return self.apply(a, b, OR)

    # -- queries ----------------------------------------------------------

    def model_count(self, node: SddNode, n_vars: Optional[int] = None) -> int:
        """Exact model count over `n_vars` variables (all vtree variables
        by default)."""
        if n_vars is None:
            n_vars = self.vtree.n_vars
        memo = {}

        def scoped(n: SddNode) -> int:
            # Count over exactly the variables of n's own vtree scope.
            if n.is_terminal:
                return 1 if n.polarity else 0
            if n.is_literal:
                return 1
            got = memo.get(n.nid)
            if got is not None:
                return got
            total = 0
            v = n.vtree
            for p, s in n.elements:
                cp = scoped(p) << (v.left.n_vars - _scope_size(p))
                cs = scoped(s) << (v.right.n_vars - _scope_size(s))
                total += cp * cs
            memo[n.nid] = total
            return total

        if node is self.false:
            return 0
        return scoped(node) << (n_vars - _scope_size(node))

    def enumerate_models(self, node: SddNode) -> Iterator[dict]:
        """Stream the partial models of `node`.

        Each model maps a subset of the variables to truth values; every
        total extension satisfies the node, models are pairwise
        inconsistent, and together they cover all satisfying
        assignments.  Unmentioned variables are don't-cares.
        """
        if node is self.false:
            return
        yield from self._walk(node)

    def _walk(self, n: SddNode) -> Iterator[dict]:
        if n.is_terminal:
            if n.polarity:
                yield {}
            return
        if n.is_literal:
            yield {n.var: n.polarity}
            return
        for p, s in n.elements:
            if s is self.false:
                continue
            for mp in self._walk(p):
                for ms in self._walk(s):
                    m = dict(mp)
                    m.update(ms)
                    yield m

    def export_text(self, node: SddNode) -> str:
        """A stable textual dump of the diagram rooted at `node`."""
        lines = []
        seen = set()

        def go(n: SddNode):
            if n.nid in seen:
                return
            seen.add(n.nid)
            if n.is_terminal:
                lines.append("%d %s" % (n.nid, "T" if n.polarity else "F"))
            elif n.is_literal:
                lines.append("%d L %s%s" % (n.nid, "" if n.polarity else "-", n.var))
            else:
                for p, s in n.elements:
                    go(p)
                    go(s)
                body = " ".join("(%d %d)" % (p.nid, s.nid) for p, s in n.elements)
                lines.append("%d D v%d %s" % (n.nid, n.vtree.position, body))

        go(node)
        return "\n".join(lines) + "\n"


def _scope_size(n: SddNode) -> int:
    return 0 if n.vtree is None else n.vtree.n_vars


def compile_formula(f: pr.PropFormula, manager: SddManager) -> SddNode:
    """Compile a propositional formula by folding apply over its tree."""
    if f.kind == pr.P_CONST:
        return manager.true if f.value else manager.false
    if f.kind == pr.P_PROP:
        return manager.literal(f.value, True)
    if f.kind == pr.P_NOT:
        return manager.negate(compile_formula(f.children[0], manager))
    if f.kind == pr.P_AND:
        out = manager.true
        for c in f.children:
            out = manager.apply(out, compile_formula(c, manager), AND)
        return out
    if f.kind == pr.P_OR:
        out = manager.false
        for c in f.children:
            out = manager.apply(out, compile_formula(c, manager), OR)
        return out
    if f.kind == pr.P_IMPLIES:
        a = compile_formula(f.children[0], manager)
        b = compile_formula(f.children[1], manager)
        return manager.apply(manager.negate(a), b, OR)
    if f.kind == pr.P_IFF:
        a = compile_formula(f.children[0], manager)
        b = compile_formula(f.children[1], manager)
        both = manager.apply(a, b, AND)
        neither = manager.apply(manager.negate(a), manager.negate(b), AND)
        return manager.apply(both, neither, OR)
    raise ValueError("unknown formula kind %r" % f.kind)
