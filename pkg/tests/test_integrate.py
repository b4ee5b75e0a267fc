"""Volume computation: interval assembly, exact cells, numeric sampling."""

import math
import random
from fractions import Fraction

import pytest

from sddwmi import NonLinearBound, NonPolynomialBound, UnboundedRegion
from sddwmi import expr as ex
from sddwmi.abstraction import abstract
from sddwmi.expr import Bound, LOWER, UPPER, Polynomial
from sddwmi.integrate import (
    BoundEntry,
    IntegralCache,
    IntegrationTask,
    Interval,
    build_task,
    cached_volume,
    combine_intervals,
    entry_for,
    expand_dont_cares,
    ground_empty,
    make_entry,
    volume_exact,
    volume_numeric,
)
from sddwmi.problem import parse_problem

from tests.test_problem import EXAMPLE


def simple_task(spec, integrand=None):
    """spec: list of (name, lowers, uppers); bounds as (expr, strict)."""
    names = tuple(name for name, _, _ in spec)
    intervals = tuple(
        Interval(name,
                 tuple(make_entry(ex.coerce(e), s) for e, s in lowers),
                 tuple(make_entry(ex.coerce(e), s) for e, s in uppers))
        for name, lowers, uppers in spec)
    if integrand is None:
        integrand = Polynomial.constant(1)
    return IntegrationTask(names, intervals, integrand)


def example_all_true():
    p = parse_problem(EXAMPLE)
    pkb, amap = abstract(p)
    model = {i: True for i in range(amap.n_props)}
    return p, amap, model


class TestIntervals:
    def test_true_literal_keeps_bound(self):
        b = Bound("x1", UPPER, True, ex.const(3))
        iv = combine_intervals("x1", [(7, b)], {7: True})
        assert iv.lower == ()
        assert len(iv.upper) == 1
        assert iv.upper[0].strict is True
        assert iv.upper[0].poly == Polynomial.constant(3)

    def test_false_literal_flips_side_and_strictness(self):
        b = Bound("x1", UPPER, True, ex.const(3))
        iv = combine_intervals("x1", [(7, b)], {7: False})
        assert iv.upper == ()
        assert iv.lower[0].strict is False
        assert iv.lower[0].poly == Polynomial.constant(3)

    def test_unassigned_id_contributes_nothing(self):
        b = Bound("x1", UPPER, True, ex.const(3))
        iv = combine_intervals("x1", [(7, b)], {})
        assert iv.lower == () and iv.upper == ()

    def test_interval_key_ignores_bound_order(self):
        a = Bound("x1", LOWER, True, ex.const(0))
        b = Bound("x1", LOWER, False, ex.var("x2"))
        iv1 = combine_intervals("x1", [(0, a), (1, b)], {0: True, 1: True})
        iv2 = combine_intervals("x1", [(1, b), (0, a)], {0: True, 1: True})
        assert iv1.key() == iv2.key()

    def test_quotient_bound_has_no_polynomial(self):
        b = Bound("x1", LOWER, True, ex.div(ex.const(4), ex.var("x2")))
        assert entry_for(b).poly is None
        assert entry_for(b).key()[0] == "q"


class TestExact:
    def test_example_all_true_volume(self):
        p, amap, model = example_all_true()
        task, scalar = build_task(model, amap, p.weights)
        assert scalar == 1
        assert volume_exact(task) == Fraction(27, 2)

    def test_unit_box(self):
        t = simple_task([("x1", [(0, False)], [(1, False)]),
                         ("x2", [(0, False)], [(1, False)])])
        assert volume_exact(t) == 1

    def test_triangle(self):
        # 0 < x1 < x2 < 1: half the unit square.
        t = simple_task([("x1", [(0, True)], [(ex.var("x2"), True)]),
                         ("x2", [(0, True)], [(1, True)])])
        assert volume_exact(t) == Fraction(1, 2)

    def test_triangle_with_polynomial_integrand(self):
        t = simple_task([("x1", [(0, True)], [(ex.var("x2"), True)]),
                         ("x2", [(0, True)], [(1, True)])],
                        integrand=Polynomial.variable("x1"))
        assert volume_exact(t) == Fraction(1, 6)

    def test_band_needs_cell_decomposition(self):
        # max(0, x2-1) < x1 < min(1, x2) over 0 < x2 < 2: area 1.
        x2 = ex.var("x2")
        t = simple_task([("x1",
                          [(0, True), (x2 - ex.const(1), True)],
                          [(1, True), (x2, True)]),
                         ("x2", [(0, True)], [(2, True)])])
        assert volume_exact(t) == 1

    def test_additivity_over_a_split(self):
        whole = simple_task([("x1", [(0, False)], [(5, False)]),
                             ("x2", [(ex.var("x1"), False)], [(7, False)])])
        left = simple_task([("x1", [(0, False)], [(2, False)]),
                            ("x2", [(ex.var("x1"), False)], [(7, False)])])
        right = simple_task([("x1", [(2, False)], [(5, False)]),
                             ("x2", [(ex.var("x1"), False)], [(7, False)])])
        assert volume_exact(whole) == volume_exact(left) + volume_exact(right)

    def test_zero_variables_is_the_constant(self):
        t = IntegrationTask((), (), Polynomial.constant(5))
        assert volume_exact(t) == 5

    def test_zero_integrand(self):
        t = simple_task([("x1", [(0, False)], [(1, False)])],
                        integrand=Polynomial.zero())
        assert volume_exact(t) == 0

    def test_ground_empty_interval_is_zero(self):
        t = simple_task([("x1", [(10, False)], [(5, False)])])
        assert ground_empty(t)
        assert volume_exact(t) == 0

    def test_degenerate_point_interval(self):
        t = simple_task([("x1", [(2, False)], [(2, False)])])
        assert not ground_empty(t)
        assert volume_exact(t) == 0
        strict = simple_task([("x1", [(2, True)], [(2, False)])])
        assert ground_empty(strict)

    def test_missing_bound_raises(self):
        t = simple_task([("x1", [], [(1, False)])])
        with pytest.raises(UnboundedRegion):
            volume_exact(t)

    def test_quadratic_bound_raises(self):
        x2 = ex.var("x2")
        t = simple_task([("x1", [(0, True)], [(x2 * x2, True)]),
                         ("x2", [(0, True)], [(2, True)])])
        with pytest.raises(NonLinearBound):
            volume_exact(t)

    def test_quotient_bound_raises(self):
        t = simple_task([("x1", [(ex.div(ex.const(4), ex.var("x2")), True)],
                          [(3, True)]),
                         ("x2", [(1, True)], [(2, True)])])
        with pytest.raises(NonPolynomialBound):
            volume_exact(t)


class TestNumeric:
    def test_constant_bounds_are_exact(self):
        t = simple_task([("x1", [(0, False)], [(1, False)]),
                         ("x2", [(0, False)], [(1, False)])],
                        integrand=(Polynomial.variable("x1")
                                   * Polynomial.variable("x2")))
        value, err, converged = volume_numeric(t)
        assert value == 0.25 and err == 0.0 and converged

    def test_example_all_true(self):
        p, amap, model = example_all_true()
        task, _ = build_task(model, amap, p.weights)
        value, err, converged = volume_numeric(task, seed=5)
        assert converged
        assert value == pytest.approx(13.5, rel=1e-6)

    def test_quadratic_bound(self):
        # 0 < x1 < x2^2 over 0 < x2 < 2: exactly 8/3.
        x2 = ex.var("x2")
        t = simple_task([("x1", [(0, True)], [(x2 * x2, True)]),
                         ("x2", [(0, True)], [(2, True)])])
        value, _err, converged = volume_numeric(t, seed=1)
        assert converged
        assert value == pytest.approx(8 / 3, rel=1e-5)

    def test_symbolic_bounds_forcing_empty_box(self):
        # x1 < x2 with x2 in (2,3), yet x1 must stay below 1 while also
        # above x2: the inferred box for x1 is empty, so the volume is 0
        # even though no single constant pair contradicts.
        t = simple_task([
            ("x0", [(ex.div(ex.const(1), ex.var("x1")), True)], [(5, False)]),
            ("x1", [(ex.var("x2"), False)], [(1, False)]),
            ("x2", [(2, False)], [(3, False)]),
        ])
        value, err, converged = volume_numeric(t, seed=4)
        assert value == 0.0 and err == 0.0 and converged

    def test_quotient_bound(self):
        # 4/x2 < x1 < 3 over 1 < x2 < 2.  The slice is empty below
        # x2 = 4/3, so the area is 2 + 4 ln(2/3).
        t = simple_task([("x1", [(ex.div(ex.const(4), ex.var("x2")), True)],
                          [(3, True)]),
                         ("x2", [(1, True)], [(2, True)])])
        value, _err, converged = volume_numeric(t, rel_tol=1e-4, seed=2)
        assert converged
        assert value == pytest.approx(2 + 4 * math.log(2.0 / 3.0), rel=1e-3)

    def test_agrees_with_exact_on_linear_tasks(self):
        rng = random.Random(20260825)
        for _ in range(15):
            b = rng.randint(1, 4)
            d = Fraction(rng.randint(1, 6), 2)
            integrand = (Polynomial.variable("x1") ** rng.randint(0, 2)
                         * Polynomial.constant(Fraction(rng.randint(1, 5), 2)))
            upper = ex.const(1) + ex.const(d) * ex.var("x2")
            t = simple_task([("x1", [(0, True)], [(upper, True)]),
                             ("x2", [(0, True)], [(b, True)])],
                            integrand=integrand)
            want = volume_exact(t)
            got, err, converged = volume_numeric(t, seed=rng.randint(0, 999))
            assert converged
            assert got == pytest.approx(float(want), rel=1e-4)

    def test_empty_region_returns_zero(self):
        t = simple_task([("x1", [(10, False)], [(5, False)]),
                         ("x2", [(0, False)], [(1, False)])])
        assert volume_numeric(t) == (0.0, 0.0, True)

    def test_unresolvable_box_raises(self):
        # x2's only upper bound divides by an interval spanning zero.
        t = simple_task([("x1", [(0, True)], [(1, True)]),
                         ("x2", [(0, True)],
                          [(ex.div(ex.const(4), ex.var("x3")), True)]),
                         ("x3", [(-1, True)], [(1, True)])])
        with pytest.raises(UnboundedRegion):
            volume_numeric(t)

    def test_missing_bound_raises(self):
        t = simple_task([("x1", [(0, False)], [])])
        with pytest.raises(UnboundedRegion):
            volume_numeric(t)


class TestTasks:
    def test_expansion_counts(self):
        p, amap, _ = example_all_true()
        # Second disjunct alone: x2 bounds true, everything else free.
        model = {3: True, 4: True}
        models, multiplicity = expand_dont_cares(model, amap, p.weights)
        assert multiplicity == 2  # b0 is boolean with unit weight
        # the unit-weight bounds on ids 1 and 2 integrate out unsplit
        assert models == [model]

    def test_no_expansion_for_total_model(self):
        p, amap, model = example_all_true()
        models, multiplicity = expand_dont_cares(model, amap, p.weights)
        assert models == [model] and multiplicity == 1

    def test_weighted_boolean_dont_care_expands(self):
        text = EXAMPLE + "(weight b0 2)\n"
        p = parse_problem(text)
        pkb, amap = abstract(p)
        models, multiplicity = expand_dont_cares({3: True, 4: True}, amap, p.weights)
        assert multiplicity == 1
        assert len(models) == 2
        assert {m[0] for m in models} == {True, False}

    def test_scalar_and_integrand_from_weights(self):
        text = EXAMPLE + "(weight b0 2)\n(weight (< x2 3) (* 3 x2))\n"
        p = parse_problem(text)
        pkb, amap = abstract(p)
        model = {i: True for i in range(amap.n_props)}
        task, scalar = build_task(model, amap, p.weights)
        assert scalar == 2
        assert task.integrand == Polynomial.constant(3) * Polynomial.variable("x2")
        # b0 false picks the unit weight for the negative literal.
        model[0] = False
        _, scalar = build_task(model, amap, p.weights)
        assert scalar == 1

    def test_boolean_polarity_stays_out_of_task_key(self):
        p, amap, model = example_all_true()
        t1, _ = build_task(model, amap, p.weights)
        flipped = dict(model)
        flipped[0] = False
        t2, _ = build_task(flipped, amap, p.weights)
        assert t1.key() == t2.key()

    def test_weight_only_atom_is_registered_and_applied(self):
        text = """
        (theory lra)
        (var real x1)
        (formula (and (< 0 x1) (< x1 2)))
        (weight (< x1 1) x1)
        """
        p = parse_problem(text)
        pkb, amap = abstract(p)
        assert amap.n_props == 3  # two formula atoms plus the weight atom
        model = {0: True, 1: True}
        models, multiplicity = expand_dont_cares(model, amap, p.weights)
        assert multiplicity == 1 and len(models) == 2
        total = Fraction(0)
        for m in models:
            task, scalar = build_task(m, amap, p.weights)
            total += scalar * volume_exact(task)
        # integral of x1 on (0,1) plus plain length of (1,2)
        assert total == Fraction(1, 2) + 1

    def test_split_atom_weight_follows_replacement_truth(self):
        text = """
        (theory nra)
        (var real x1)
        (var real x2)
        (formula (and (< 4 (* x1 x2)) (< 1 x2) (< x2 2) (< 0 x1) (< x1 3)))
        (weight (< 4 (* x1 x2)) 2)
        """
        p = parse_problem(text)
        pkb, amap = abstract(p)
        # Positive-coefficient branch: guard true, quotient lower bound true.
        model = {0: True, 1: True, 2: False, 3: False,
                 4: True, 5: True, 6: True, 7: True}
        task, scalar = build_task(model, amap, p.weights)
        assert scalar == 2
        value, _err, converged = volume_numeric(task, rel_tol=1e-4, seed=4)
        assert converged
        # region is empty below x2 = 4/3; the remainder integrates to
        # 2 + 4 ln(2/3), doubled by the atom's weight
        assert scalar * value == pytest.approx(
            2 * (2 + 4 * math.log(2.0 / 3.0)), rel=1e-3)
        # With the product atom false the weight is the unit default.
        unsat = dict(model)
        unsat[1] = False
        _, scalar = build_task(unsat, amap, p.weights)
        assert scalar == 1


class TestCache:
    def test_hit_on_repeat(self):
        p, amap, model = example_all_true()
        task, _ = build_task(model, amap, p.weights)
        cache = IntegralCache()
        first = cached_volume(task, "exact", cache)
        second = cached_volume(task, "exact", cache)
        assert first == second == (Fraction(27, 2), 0.0, True)
        assert cache.hits == 1 and cache.misses == 1

    def test_boolean_flip_hits_cache(self):
        p, amap, model = example_all_true()
        cache = IntegralCache()
        t1, _ = build_task(model, amap, p.weights)
        flipped = dict(model)
        flipped[0] = False
        t2, _ = build_task(flipped, amap, p.weights)
        cached_volume(t1, "exact", cache)
        cached_volume(t2, "exact", cache)
        assert cache.hits == 1

    def test_exact_backend_falls_back_to_numeric(self):
        x2 = ex.var("x2")
        t = simple_task([("x1", [(0, True)], [(x2 * x2, True)]),
                         ("x2", [(0, True)], [(2, True)])])
        value, err, converged = cached_volume(t, "exact", IntegralCache(), seed=9)
        assert converged and err > 0.0
        assert value == pytest.approx(8 / 3, rel=1e-5)
