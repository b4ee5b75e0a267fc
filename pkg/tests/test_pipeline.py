"""End-to-end weighted model integration and conditioning."""

from fractions import Fraction

import pytest

from sddwmi import TimeoutExceeded, UnboundedRegion, ZeroEvidence
from sddwmi.integrate import IntegralCache
from sddwmi.pipeline import (
    SolveOptions,
    brute_force_wmi,
    conditional_probability,
    wmi,
)
from sddwmi.problem import parse_problem, parse_query

from tests.test_problem import EXAMPLE

UNIT_BOX = """
(theory lra)
(var real x)
(formula (and (< 0 x) (< x 1)))
"""

WEIGHTED_SEGMENT = """
(theory lra)
(var real x)
(formula (and (< 0 x) (< x 2)))
(weight (< x 2) x)
"""

BOOLEAN_PAIR = """
(theory lra)
(var bool b0)
(var bool b1)
(formula (or b0 b1))
(weight b0 3/10)
(weight (not b0) 7/10)
(weight b1 1/5)
(weight (not b1) 4/5)
"""

HYBRID = """
(theory lra)
(var bool b)
(var real x)
(formula (and (< -10 x) (< x 10)
              (or (and b (< 0 x) (< x 1))
                  (and (not b) (< 2 x) (< x 5)))))
(weight b 2)
"""


class TestWmi:
    def test_unit_box(self):
        value, stats = wmi(parse_problem(UNIT_BOX))
        assert value == 1
        assert isinstance(value, Fraction)
        assert stats.model_count == 1 and stats.n_models == 1

    def test_weighted_segment(self):
        value, _ = wmi(parse_problem(WEIGHTED_SEGMENT))
        assert value == 2

    def test_boolean_only(self):
        # 1 - (7/10)(4/5)
        value, stats = wmi(parse_problem(BOOLEAN_PAIR))
        assert value == Fraction(11, 25)
        assert stats.model_count == 3

    def test_hybrid_disjunction(self):
        # weight 2 on a length-1 segment plus weight 1 on a length-3 one
        value, _ = wmi(parse_problem(HYBRID))
        assert value == 5

    def test_weight_only_atom_contributes(self):
        text = """
        (theory lra)
        (var real x)
        (formula (and (< 0 x) (< x 2)))
        (weight (< x 1) x)
        """
        value, _ = wmi(parse_problem(text))
        assert value == Fraction(3, 2)

    def test_unsatisfiable_is_zero(self):
        text = """
        (theory lra)
        (var real x)
        (formula (and (< x 0) (< 1 x)))
        """
        value, stats = wmi(parse_problem(text))
        assert value == 0

    def test_contradiction_without_props(self):
        text = """
        (theory lra)
        (var real x)
        (formula false)
        """
        value, stats = wmi(parse_problem(text))
        assert value == 0 and stats.model_count == 0

    def test_tautology_without_reals(self):
        text = """
        (theory lra)
        (var bool b)
        (formula (or b (not b)))
        """
        value, stats = wmi(parse_problem(text))
        assert value == 2  # both boolean assignments, unit weights
        assert stats.model_count == 2

    def test_declared_unused_boolean_doubles(self):
        # The model space ranges over the declared vocabulary, so a
        # boolean that never occurs still has two values per model.
        text = """
        (theory lra)
        (var bool spare)
        (var real x)
        (formula (and (< 0 x) (< x 1)))
        """
        value, stats = wmi(parse_problem(text))
        assert value == 2
        assert stats.n_props == 2  # the two bounds; `spare` is no prop
        est, _err = brute_force_wmi(parse_problem(text))
        assert abs(est - 2.0) < 1e-9

    def test_two_unused_booleans_quadruple(self):
        text = """
        (theory lra)
        (var bool s0)
        (var bool s1)
        (var real x)
        (formula (and (< 0 x) (< x 1)))
        """
        value, _stats = wmi(parse_problem(text))
        assert value == 4

    def test_unbounded_region_raises(self):
        # The disjunctive example leaves x1 free in some models.
        with pytest.raises(UnboundedRegion):
            wmi(parse_problem(EXAMPLE))

    def test_deadline(self):
        with pytest.raises(TimeoutExceeded):
            wmi(parse_problem(HYBRID), SolveOptions(deadline_s=1e-9))

    def test_deterministic(self):
        v1, s1 = wmi(parse_problem(HYBRID))
        v2, s2 = wmi(parse_problem(HYBRID))
        assert v1 == v2
        assert s1.n_models == s2.n_models and s1.n_tasks == s2.n_tasks

    def test_jobs_match_serial(self):
        serial, _ = wmi(parse_problem(HYBRID))
        parallel, _ = wmi(parse_problem(HYBRID), SolveOptions(jobs=3))
        assert serial == parallel

    def test_numeric_matches_exact(self):
        exact, _ = wmi(parse_problem(HYBRID))
        numeric, stats = wmi(parse_problem(HYBRID),
                             SolveOptions(integrator="numeric"))
        assert stats.all_converged
        assert numeric == pytest.approx(float(exact), rel=1e-6)

    def test_nonlinear_falls_back_to_float(self):
        text = """
        (theory nra)
        (var real x1)
        (var real x2)
        (formula (and (< 4 (* x1 x2)) (< 1 x2) (< x2 2) (< 0 x1) (< x1 3)))
        """
        value, stats = wmi(parse_problem(text), SolveOptions(rel_tol=1e-4))
        assert isinstance(value, float)
        assert stats.all_converged
        import math
        assert value == pytest.approx(2 + 4 * math.log(2.0 / 3.0), rel=1e-3)

    def test_stats_timings_populated(self):
        _, stats = wmi(parse_problem(HYBRID))
        assert stats.t_total_ms > 0
        assert stats.n_props == 7  # six comparisons plus one boolean
        assert stats.n_tasks >= stats.n_models

    def test_shared_cache_hits_across_runs(self):
        cache = IntegralCache()
        p = parse_problem(HYBRID)
        wmi(p, cache=cache)
        _, stats = wmi(p, cache=cache)
        assert stats.cache_hits > 0 and stats.cache_misses == 0

    def test_cache_disabled_same_value(self):
        with_cache, _ = wmi(parse_problem(HYBRID))
        without, stats = wmi(parse_problem(HYBRID),
                             SolveOptions(cache_enabled=False))
        assert with_cache == without
        assert stats.cache_hits == 0 and stats.cache_misses == 0

    def test_sliced_volume_matches_unsliced(self):
        base = """
        (theory lra)
        (var real x)
        (formula (and (< 0 x) (< x 2) (or (< x 1) (< x 3))))
        """
        v0, s0 = wmi(parse_problem(base))
        assert v0 == 2
        # Equal weights on both polarities force the don't-care atom to
        # split the region; the halves must still sum to the whole.
        both = base + "(weight (< x 1) 3)\n(weight (not (< x 1)) 3)\n"
        v1, s1 = wmi(parse_problem(both))
        assert v1 == 6
        assert s1.n_tasks >= s0.n_tasks

    def test_conjoining_never_increases_volume(self):
        p = parse_problem(HYBRID)
        q = parse_query("(formula (< x 3))", p)
        whole, _ = wmi(p)
        part, _ = wmi(p.conjoin(q))
        assert part <= whole


class TestConditional:
    def test_uniform_interval(self):
        p = parse_problem("""
        (theory lra)
        (var real x)
        (formula (and (< 0 x) (< x 2)))
        """)
        q = parse_query("(formula (< x 1))", p)
        res = conditional_probability(p, q)
        assert res.probability == Fraction(1, 2)
        assert res.denominator == 2

    def test_weighted_interval(self):
        p = parse_problem(WEIGHTED_SEGMENT)
        q = parse_query("(formula (< x 1))", p)
        res = conditional_probability(p, q)
        assert res.probability == Fraction(1, 4)

    def test_complement_sums_to_one_exactly(self):
        p = parse_problem(WEIGHTED_SEGMENT)
        q = parse_query("(formula (< x 1))", p)
        nq = parse_query("(formula (not (< x 1)))", p)
        a = conditional_probability(p, q).probability
        b = conditional_probability(p, nq).probability
        assert a + b == 1

    def test_with_evidence(self):
        p = parse_problem(HYBRID)
        q = parse_query("(formula b)", p)
        e = parse_query("(formula (< x 4))", p)
        res = conditional_probability(p, q, e)
        # under x < 4: weight 2 on (0,1) for b, length 2 on (2,4) for not-b
        assert res.probability == Fraction(1, 2)

    def test_zero_evidence_raises(self):
        p = parse_problem(UNIT_BOX)
        e = parse_query("(formula (< 5 x))", p)
        q = parse_query("(formula (< x 1))", p)
        with pytest.raises(ZeroEvidence):
            conditional_probability(p, q, e)

    def test_fresh_boolean_query_is_a_coin_flip(self):
        # Querying a declared boolean the formula never mentions must
        # give 1/2, not 1: conditioning binds it while the denominator
        # still counts both values.
        p = parse_problem("""
        (theory lra)
        (var bool b)
        (var real x)
        (formula (and (< 0 x) (< x 1)))
        """)
        q = parse_query("(formula b)", p)
        nq = parse_query("(formula (not b))", p)
        pos = conditional_probability(p, q)
        neg = conditional_probability(p, nq)
        assert pos.probability == Fraction(1, 2)
        assert pos.probability + neg.probability == 1


class TestBruteForce:
    def test_boolean_case_is_exact(self):
        value, err = brute_force_wmi(parse_problem(BOOLEAN_PAIR))
        assert value == Fraction(11, 25) and err == 0.0

    def test_agrees_with_pipeline_on_hybrid(self):
        p = parse_problem(HYBRID)
        exact, _ = wmi(p)
        estimate, err = brute_force_wmi(p, n_points=1 << 14, seed=11)
        assert abs(estimate - float(exact)) <= max(5 * err, 1e-3 * float(exact))

    def test_boolean_literal_weight_over_reals(self):
        # A boolean literal's weight may mention real variables; it has
        # to join the per-point density, not a per-assignment constant.
        p = parse_problem("""
        (theory lra)
        (var bool b)
        (var real x)
        (formula (and (< 0 x) (< x 1)))
        (weight b x)
        """)
        exact, _ = wmi(p)
        assert exact == Fraction(3, 2)  # b: integral of x; not b: 1
        estimate, err = brute_force_wmi(p, n_points=1 << 14, seed=2)
        assert abs(estimate - 1.5) <= max(5 * err, 1e-3)

    def test_no_constant_box_raises(self):
        with pytest.raises(UnboundedRegion):
            brute_force_wmi(parse_problem(EXAMPLE))
