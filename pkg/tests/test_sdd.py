"""Tests for the decision diagram: canonicity, counting, enumeration."""

import random

import pytest

from sddwmi import prop as pr
from sddwmi.errors import ResourceLimit
from sddwmi.sdd import (
    AND,
    BALANCED,
    OR,
    RIGHT_LINEAR,
    SddManager,
    build_vtree,
    compile_formula,
)
from tests.helpers import (
    equivalent_rewrite,
    models_disjoint,
    rand_prop_formula,
    truth_table_count,
)


def fresh_manager(n, kind=BALANCED, cap=10_000_000):
    return SddManager(build_vtree(range(n), kind), node_cap=cap)


class TestVtree:
    def test_balanced_depth(self):
        for n, depth in [(1, 0), (2, 1), (5, 3), (8, 3), (9, 4), (16, 4)]:
            assert build_vtree(range(n), BALANCED).depth() == depth

    def test_right_linear_depth(self):
        for n in (1, 2, 7):
            assert build_vtree(range(n), RIGHT_LINEAR).depth() == max(0, n - 1)

    def test_inorder_positions(self):
        vt = build_vtree(range(4), BALANCED)
        assert sorted(leaf.position for leaf in vt.leaves.values()) == [0, 2, 4, 6]
        assert vt.root.first == 0 and vt.root.last == 6


class TestTerminalAlgebra:
    def test_literal_contradiction_and_tautology(self):
        m = fresh_manager(3)
        x = m.literal(0)
        nx = m.negate(x)
        assert m.apply(x, nx, AND) is m.false
        assert m.apply(x, nx, OR) is m.true
        assert m.negate(nx) is x

    def test_identity_and_domination(self):
        m = fresh_manager(3)
        x = m.literal(1)
        assert m.apply(x, m.true, AND) is x
        assert m.apply(x, m.false, AND) is m.false
        assert m.apply(x, m.false, OR) is x
        assert m.apply(x, m.true, OR) is m.true

    def test_idempotence_over_diagrams(self):
        m = fresh_manager(4)
        f = compile_formula(pr.p_or(pr.p_prop(0), pr.p_and(pr.p_prop(1), pr.p_prop(2))), m)
        assert m.apply(f, f, AND) is f
        assert m.apply(f, m.negate(f), AND) is m.false


class TestCanonicity:
    def test_de_morgan_pointer_identity(self):
        m = fresh_manager(2)
        a, b = pr.p_prop(0), pr.p_prop(1)
        f1 = compile_formula(pr.p_and(a, b), m)
        f2 = compile_formula(pr.p_not(pr.p_or(pr.p_not(a), pr.p_not(b))), m)
        assert f1 is f2

    def test_argument_order_is_immaterial(self):
        m = fresh_manager(3)
        a, b, c = map(pr.p_prop, range(3))
        f1 = compile_formula(pr.p_or(a, b, c), m)
        f2 = compile_formula(pr.p_or(c, a, b), m)
        assert f1 is f2

    def test_random_equivalent_rewrites(self):
        rng = random.Random(1812)
        for trial in range(60):
            n = rng.randint(2, 7)
            f = rand_prop_formula(rng, n)
            g = equivalent_rewrite(rng, f)
            m = fresh_manager(n, rng.choice([BALANCED, RIGHT_LINEAR]))
            assert compile_formula(f, m) is compile_formula(g, m)

    def test_structural_invariants(self):
        rng = random.Random(6021)
        m = fresh_manager(6)
        roots = [compile_formula(rand_prop_formula(rng, 6), m) for _ in range(30)]
        seen = set()
        stack = [r for r in roots if r.is_decision]
        while stack:
            node = stack.pop()
            if node.nid in seen or not node.is_decision:
                continue
            seen.add(node.nid)
            assert len(node.elements) >= 2
            subs = [s.nid for _, s in node.elements]
            assert len(set(subs)) == len(subs), "uncompressed element list"
            primes = [p.nid for p, _ in node.elements]
            assert primes == sorted(primes), "elements not in canonical order"
            for p, s in node.elements:
                assert p is not m.false
                assert node.vtree.left.contains(p.vtree)
                assert s.vtree is None or node.vtree.right.contains(s.vtree)
                stack.append(p)
                stack.append(s)


class TestModelCounting:
    def test_example_disjunction_counts_eleven(self):
        # (p0 and p1 and p2) or (p3 and p4) over five propositions.
        f = pr.p_or(pr.p_and(pr.p_prop(0), pr.p_prop(1), pr.p_prop(2)),
                    pr.p_and(pr.p_prop(3), pr.p_prop(4)))
        m = fresh_manager(5)
        assert m.model_count(compile_formula(f, m)) == 11

    def test_terminals(self):
        m = fresh_manager(4)
        assert m.model_count(m.true) == 16
        assert m.model_count(m.false) == 0
        assert m.model_count(m.literal(2)) == 8

    def test_matches_truth_table(self):
        rng = random.Random(271828)
        for trial in range(80):
            n = rng.randint(1, 8)
            f = rand_prop_formula(rng, n)
            m = fresh_manager(n, rng.choice([BALANCED, RIGHT_LINEAR]))
            assert m.model_count(compile_formula(f, m)) == truth_table_count(f, n)


class TestEnumeration:
    def test_true_yields_the_empty_model(self):
        m = fresh_manager(3)
        assert list(m.enumerate_models(m.true)) == [{}]
        assert list(m.enumerate_models(m.false)) == []

    def test_dont_care_expansion_matches_count(self):
        rng = random.Random(314159)
        for trial in range(60):
            n = rng.randint(1, 8)
            f = rand_prop_formula(rng, n)
            m = fresh_manager(n, rng.choice([BALANCED, RIGHT_LINEAR]))
            node = compile_formula(f, m)
            models = list(m.enumerate_models(node))
            assert sum(1 << (n - len(mo)) for mo in models) == m.model_count(node)

    def test_models_satisfy_and_exclude(self):
        rng = random.Random(161803)
        for trial in range(40):
            n = rng.randint(2, 6)
            f = rand_prop_formula(rng, n)
            m = fresh_manager(n)
            models = list(m.enumerate_models(compile_formula(f, m)))
            for mo in models:
                # Any extension of a partial model satisfies the formula.
                for _ in range(3):
                    total = {i: rng.random() < 0.5 for i in range(n)}
                    total.update(mo)
                    assert f.evaluate(total)
            for i in range(len(models)):
                for j in range(i + 1, len(models)):
                    assert models_disjoint(models[i], models[j])

    def test_enumeration_is_deterministic(self):
        f = pr.p_or(pr.p_and(pr.p_prop(0), pr.p_prop(1)), pr.p_prop(2))
        m1 = fresh_manager(3)
        m2 = fresh_manager(3)
        a = list(m1.enumerate_models(compile_formula(f, m1)))
        b = list(m2.enumerate_models(compile_formula(f, m2)))
        assert a == b


class TestResourceAndExport:
    def test_node_cap(self):
        rng = random.Random(13)
        m = fresh_manager(12, cap=40)
        with pytest.raises(ResourceLimit):
            for _ in range(50):
                compile_formula(rand_prop_formula(rng, 12, depth=5), m)

    def test_export_mentions_every_node_once(self):
        m = fresh_manager(4)
        f = compile_formula(
            pr.p_iff(pr.p_prop(0), pr.p_or(pr.p_prop(1), pr.p_prop(2))), m)
        text = m.export_text(f)
        ids = [line.split()[0] for line in text.strip().splitlines()]
        assert len(ids) == len(set(ids))
        assert any(line.startswith("%d D" % f.nid) for line in text.splitlines())

    def test_two_managers_agree_on_export(self):
        f = pr.p_implies(pr.p_and(pr.p_prop(0), pr.p_prop(1)), pr.p_prop(2))
        t1 = SddManager(build_vtree(range(3)))
        t2 = SddManager(build_vtree(range(3)))
        a = t1.export_text(compile_formula(f, t1))
        b = t2.export_text(compile_formula(f, t2))
        assert a == b
