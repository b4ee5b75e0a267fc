"""Shared test utilities: random propositional formulas, semantics-
preserving rewrites, and truth-table oracles."""

import numpy as np

from sddwmi import prop as pr


def rand_prop_formula(rng, n_props, depth=4):
    """A random formula guaranteed to mention at least one proposition."""
    def go(d):
        if d == 0 or rng.random() < 0.25:
            return pr.p_prop(rng.randrange(n_props))
        kind = rng.random()
        if kind < 0.15:
            return pr.p_not(go(d - 1))
        if kind < 0.5:
            return pr.p_and(*[go(d - 1) for _ in range(rng.randint(2, 3))])
        if kind < 0.85:
            return pr.p_or(*[go(d - 1) for _ in range(rng.randint(2, 3))])
        if kind < 0.93:
            return pr.p_implies(go(d - 1), go(d - 1))
        return pr.p_iff(go(d - 1), go(d - 1))

    return go(depth)


def equivalent_rewrite(rng, f):
    """Rewrite a formula into a syntactically different equivalent one.

    Applies, at random nodes: De Morgan duals, double negation,
    argument reordering, implication and biconditional expansion.
    """
    def go(node):
        children = tuple(go(c) for c in node.children)
        node = pr.PropFormula(node.kind, node.value, children)
        roll = rng.random()
        if node.kind in (pr.P_AND, pr.P_OR):
            if roll < 0.3:
                # De Morgan: and(a, b) == not(or(not a, not b)).
                dual = pr.P_OR if node.kind == pr.P_AND else pr.P_AND
                flipped = tuple(pr.p_not(c) for c in children)
                return pr.p_not(pr.PropFormula(dual, None, flipped))
            if roll < 0.6:
                shuffled = list(children)
                rng.shuffle(shuffled)
                return pr.PropFormula(node.kind, None, tuple(shuffled))
        elif node.kind == pr.P_IMPLIES and roll < 0.5:
            return pr.p_or(pr.p_not(children[0]), children[1])
        elif node.kind == pr.P_IFF and roll < 0.5:
            return pr.p_and(pr.p_implies(children[0], children[1]),
                            pr.p_implies(children[1], children[0]))
        elif node.kind == pr.P_NOT and roll < 0.3:
            return pr.p_not(pr.p_not(pr.p_not(children[0])))
        if roll > 0.9:
            return pr.p_not(pr.p_not(node))
        return node

    return go(f)


def truth_table(f, n_props):
    """Evaluate `f` on all 2**n_props assignments, vectorised.

    Bit i of the row index gives proposition i's value.
    """
    rows = np.arange(1 << n_props, dtype=np.uint32)

    def go(node):
        if node.kind == pr.P_CONST:
            return np.full(rows.shape, node.value, dtype=bool)
        if node.kind == pr.P_PROP:
            return ((rows >> node.value) & 1).astype(bool)
        if node.kind == pr.P_NOT:
            return ~go(node.children[0])
        if node.kind == pr.P_AND:
            out = go(node.children[0])
            for c in node.children[1:]:
                out = out & go(c)
            return out
        if node.kind == pr.P_OR:
            out = go(node.children[0])
            for c in node.children[1:]:
                out = out | go(c)
            return out
        if node.kind == pr.P_IMPLIES:
            return ~go(node.children[0]) | go(node.children[1])
        if node.kind == pr.P_IFF:
            return go(node.children[0]) == go(node.children[1])
        raise ValueError(node.kind)

    return go(f)


def truth_table_count(f, n_props):
    return int(truth_table(f, n_props).sum())


def models_disjoint(a, b):
    """Whether two partial models have no common total extension."""
    return any(a[k] != b[k] for k in a.keys() & b.keys())
