"""Per-model volumes: interval combination, exact and numeric backends.

A partial model fixes the polarity of every bound-bearing proposition,
which turns the refinements into one interval per real variable: the
asserted bounds for true literals, their negations for false ones.  The
exact backend eliminates variables innermost-first, pushing the
feasibility constraint of each slice outward and splitting the outer
domain into cells on which a single lower and upper bound dominate; it
is complete for linear bounds.  The numeric backend integrates the
innermost variable in closed form and estimates the outer integral with
scrambled quasi-random sampling over the constant bounding box.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.stats import qmc

from .abstraction import AbstractionMap
from .errors import (
    NonLinearBound,
    NonPolynomialBound,
    NotPolynomial,
    ToleranceNotReached,
    UnboundedRegion,
)
from .expr import (
    LOWER,
    Bound,
    Expr,
    Polynomial,
    format_expr,
    to_polynomial,
)
from .problem import WeightTable

DEFAULT_REL_TOL = 1e-6


@dataclass(frozen=True)
class BoundEntry:
    """One member of an interval's bound set, with its polynomial form
    precomputed when it has one."""

    expr: Expr
    strict: bool
    poly: Optional[Polynomial]

    def key(self):
        got = self.__dict__.get("_key")
        if got is None:
            if self.poly is not None:
                got = ("p", self.poly.key(), self.strict)
            else:
                got = ("q", format_expr(self.expr), self.strict)
            self.__dict__["_key"] = got
        return got


def make_entry(expr: Expr, strict: bool) -> BoundEntry:
    try:
        poly = to_polynomial(expr)
    except NotPolynomial:
        poly = None
    return BoundEntry(expr, strict, poly)


@dataclass(frozen=True)
class Interval:
    """The bound sets a model imposes on one variable.  The effective
    interval is [max lower, min upper]; empty sets mean unbounded."""

    subject: str
    lower: tuple
    upper: tuple

    def key(self):
        got = self.__dict__.get("_key")
        if got is None:
            got = (self.subject,
                   tuple(sorted(e.key() for e in self.lower)),
                   tuple(sorted(e.key() for e in self.upper)))
            self.__dict__["_key"] = got
        return got


def entry_for(bound: Bound) -> BoundEntry:
    return make_entry(bound.value, bound.strict)


def combine_intervals(lead_var: str, bounds: Iterable, model: Mapping[int, bool]) -> Interval:
    """Intersect the bounds a model asserts on `lead_var`.

    `bounds` yields (prop_id, bound) pairs whose bound subjects equal
    `lead_var`; false literals contribute the negated bound, unassigned
    ids contribute nothing.
    """
    lower = []
    upper = []
    for prop_id, bound in bounds:
        value = model.get(prop_id)
        if value is None:
            continue
        b = bound if value else bound.negated()
        (lower if b.direction == LOWER else upper).append(entry_for(b))
    return Interval(lead_var, tuple(lower), tuple(upper))


@dataclass(frozen=True)
class IntegrationTask:
    """Everything a volume computation needs: the integration order
    (innermost first), one interval per variable, and the polynomial
    integrand.  The key identifies the task up to the boolean scalar
    applied outside.  When `factors` is given it must multiply out to
    `integrand`; component splitting uses it to keep the product form."""

    variables: tuple
    intervals: tuple  # aligned with `variables`
    integrand: Polynomial
    factors: Optional[tuple] = None

    def key(self):
        got = self.__dict__.get("_key")
        if got is None:
            got = (self.integrand.key(),
                   tuple(iv.key() for iv in self.intervals))
            self.__dict__["_key"] = got
        return got

    def interval_of(self, name: str) -> Interval:
        return self.intervals[self.variables.index(name)]


class LeadIndex:
    """Per-variable bound lists, with both polarities of every bound
    turned into entries once per map rather than once per model."""

    def __init__(self, amap: AbstractionMap):
        self.by_var = {}
        self.rows = {}  # var -> [(prop_id, pos_entry, neg_entry, pos_is_lower)]
        for r in amap.refinements:
            if r.bound is not None:
                self.by_var.setdefault(r.lead_var, []).append((r.prop_id, r.bound))
                self.rows.setdefault(r.lead_var, []).append(
                    (r.prop_id, entry_for(r.bound), entry_for(r.bound.negated()),
                     r.bound.direction == LOWER))

    def bounds_for(self, name: str):
        return self.by_var.get(name, ())


def build_task(model: Mapping[int, bool], amap: AbstractionMap,
               weights: WeightTable, lead_index: Optional[LeadIndex] = None):
    """Assemble the integration task and boolean scalar for one model.

    Returns (task, scalar): constant weight factors multiply into the
    scalar, everything else into the polynomial integrand.  Weights
    attached to sign-split atoms are applied according to the truth of
    their replacement formula under the model.
    """
    if lead_index is None:
        lead_index = LeadIndex(amap)
    scalar = Fraction(1)
    factors = []
    for prop_id in sorted(model):
        key = amap.keys[prop_id]
        w = weights.poly_weight(key, model[prop_id])
        if w is None:
            continue
        if w.is_constant():
            scalar *= w.constant_value()
        else:
            factors.append(w)
    for key, replacement in amap.split_replacements.items():
        if not weights.mentions(key):
            continue
        truth = replacement.evaluate(model)
        w = weights.poly_weight(key, truth)
        if w is None:
            continue
        if w.is_constant():
            scalar *= w.constant_value()
        else:
            factors.append(w)
    integrand = Polynomial.constant(1)
    for w in factors:
        integrand = integrand * w
    names = tuple(amap.order.names)
    intervals = []
    get = model.get
    for v in names:
        lower = []
        upper = []
        for prop_id, pos, neg, pos_lower in lead_index.rows.get(v, ()):
            value = get(prop_id)
            if value is None:
                continue
            if value:
                (lower if pos_lower else upper).append(pos)
            else:
                (upper if pos_lower else lower).append(neg)
        intervals.append(Interval(v, tuple(lower), tuple(upper)))
    return IntegrationTask(names, tuple(intervals), integrand,
                           tuple(factors)), scalar


class GroundScreen:
    """Fast emptiness test from constant bounds alone.

    Precomputes, per proposition and polarity, the constant bound the
    literal asserts on its subject variable; `empty` then folds a
    model's assignments into per-variable envelopes without building a
    task.  A True result means every expansion of the model has an
    empty region; False decides nothing.
    """

    def __init__(self, amap: AbstractionMap):
        self.effects = {}
        for r in amap.refinements:
            if r.bound is None:
                continue
            slots = [None, None]
            for val, bound in ((True, r.bound), (False, r.bound.negated())):
                entry = entry_for(bound)
                if entry.poly is not None and entry.poly.is_constant():
                    slots[val] = (r.lead_var, bound.direction == LOWER,
                                  entry.poly.constant_value(), bound.strict)
            if slots[0] is not None or slots[1] is not None:
                self.effects[r.prop_id] = slots

    def empty(self, assignment) -> bool:
        lows = {}
        highs = {}
        effects = self.effects
        for prop_id, value in assignment:
            slots = effects.get(prop_id)
            if slots is None:
                continue
            eff = slots[value]
            if eff is None:
                continue
            var, is_lower, bound, strict = eff
            if is_lower:
                cur = lows.get(var)
                if cur is None or bound > cur[0] or (bound == cur[0] and strict):
                    lows[var] = (bound, strict)
                    other = highs.get(var)
                    if other is not None and (
                            bound > other[0] or
                            (bound == other[0] and (strict or other[1]))):
                        return True
            else:
                cur = highs.get(var)
                if cur is None or bound < cur[0] or (bound == cur[0] and strict):
                    highs[var] = (bound, strict)
                    other = lows.get(var)
                    if other is not None and (
                            other[0] > bound or
                            (other[0] == bound and (strict or other[1]))):
                        return True
        return False


def expansion_targets(amap: AbstractionMap, weights: WeightTable) -> set:
    """Ids whose polarity changes the density when left unassigned.

    That is every id with a non-unit weight of its own, plus every id a
    weighted sign-split atom's replacement formula reads.
    """
    needed = set()
    for key, replacement in amap.split_replacements.items():
        if weights.mentions(key):
            needed |= replacement.props()
    for r in amap.refinements:
        if not weights.is_unit(amap.keys[r.prop_id]):
            needed.add(r.prop_id)
    return needed


def expand_dont_cares(model: Mapping[int, bool], amap: AbstractionMap,
                      weights: WeightTable, targets: Optional[set] = None):
    """Expand the don't-cares that influence the density.

    A don't-care id needs both polarities only when the density depends
    on it (see `expansion_targets`).  The rest integrate out: an
    unassigned bound's two polarities tile the model's region exactly,
    so dropping the bound sums them in one task, while an unassigned
    pure-boolean proposition leaves the region untouched and doubles
    the multiplicity.  Returns (models, multiplicity).
    """
    if targets is None:
        targets = expansion_targets(amap, weights)
    expand = []
    free = 0
    for r in amap.refinements:
        if r.prop_id in model:
            continue
        if r.prop_id in targets:
            expand.append(r.prop_id)
        elif r.bound is None:
            free += 1
    if not expand:
        return [dict(model)], 1 << free
    out = []
    for bits in itertools.product((False, True), repeat=len(expand)):
        m = dict(model)
        m.update(zip(expand, bits))
        out.append(m)
    return out, 1 << free


# ---------------------------------------------------------------------------
# Bound pruning
#
# Bounds are compared over the box the constant bounds define, with
# exact rational interval arithmetic (infinities as floats, which mix
# fine with Fractions in comparisons).  A bound provably on the wrong
# side of another everywhere can never bind, and removing it leaves the
# region's defining max/min untouched, so pruning is exact.

_NEG_INF = float("-inf")
_POS_INF = float("inf")


def _iv_add(a, b):
    return a[0] + b[0], a[1] + b[1]


def _iv_mul(a, b):
    points = []
    for x in a:
        for y in b:
            points.append(0 if x == 0 or y == 0 else x * y)
    return min(points), max(points)


def _poly_range(p: Polynomial, boxes):
    """Exact (lo, hi) envelope of a polynomial over per-variable boxes."""
    total = (Fraction(0), Fraction(0))
    for monomial, coeff in p.terms():
        term = (coeff, coeff)
        for name, exponent in monomial:
            factor = boxes.get(name, (_NEG_INF, _POS_INF))
            for _ in range(exponent):
                term = _iv_mul(term, factor)
        total = _iv_add(total, term)
    return total


def _prune_side(entries, boxes, is_lower):
    if len(entries) < 2:
        return entries
    ranges = [None if e.poly is None else _poly_range(e.poly, boxes)
              for e in entries]

    def dominated(j):
        rj = ranges[j]
        if rj is None:
            return False
        for i, ri in enumerate(ranges):
            if i == j or ri is None:
                continue
            if is_lower:
                beaten = rj[1] <= ri[0]  # the other lower is above j's
                mutual = ri[1] <= rj[0]
            else:
                beaten = ri[1] <= rj[0]  # the other upper is below j's
                mutual = rj[1] <= ri[0]
            if beaten and (not mutual or i < j):
                return True
        return False

    kept = tuple(e for j, e in enumerate(entries) if not dominated(j))
    return kept if kept else entries


def _constant_boxes(task: IntegrationTask):
    """Per-variable (lo, hi) envelope from the constant bound entries."""
    boxes = {}
    for iv in task.intervals:
        lo, hi = _NEG_INF, _POS_INF
        for e in iv.lower:
            if e.poly is not None and e.poly.is_constant():
                lo = max(lo, e.poly.constant_value())
        for e in iv.upper:
            if e.poly is not None and e.poly.is_constant():
                hi = min(hi, e.poly.constant_value())
        boxes[iv.subject] = (lo, hi)
    return boxes


def prune_intervals(task: IntegrationTask) -> IntegrationTask:
    """Drop bounds that provably never bind anywhere in the constant box."""
    boxes = _constant_boxes(task)
    intervals = tuple(
        Interval(iv.subject,
                 _prune_side(iv.lower, boxes, True),
                 _prune_side(iv.upper, boxes, False))
        for iv in task.intervals)
    return IntegrationTask(task.variables, intervals, task.integrand)


# ---------------------------------------------------------------------------
# Exact backend

def ground_empty(task: IntegrationTask) -> bool:
    """True when the constant bound entries alone make a slice empty."""
    for iv in task.intervals:
        lo, lo_strict = None, False
        for e in iv.lower:
            if e.poly is not None and e.poly.is_constant():
                c = e.poly.constant_value()
                if lo is None or c > lo or (c == lo and e.strict):
                    lo, lo_strict = c, e.strict
        hi, hi_strict = None, False
        for e in iv.upper:
            if e.poly is not None and e.poly.is_constant():
                c = e.poly.constant_value()
                if hi is None or c < hi or (c == hi and e.strict):
                    hi, hi_strict = c, e.strict
        if lo is not None and hi is not None:
            if lo > hi or (lo == hi and (lo_strict or hi_strict)):
                return True
    return False


class _Constraint:
    """poly < 0 (strict) or poly <= 0."""

    __slots__ = ("poly", "strict")

    def __init__(self, poly, strict):
        self.poly = poly
        self.strict = strict


def volume_exact(task: IntegrationTask) -> Fraction:
    """Exact volume by innermost-first variable elimination.

    Splits each level into cells where one lower and one upper bound
    dominate, pushes the lower <= upper feasibility constraint outward,
    and evaluates the ground residue exactly.  Raises NonLinearBound or
    NonPolynomialBound when elimination would need to divide by a
    symbolic coefficient, and UnboundedRegion when a bound set is empty.
    """
    if task.integrand.is_zero():
        return Fraction(0)
    task = prune_intervals(task)
    boxes = _constant_boxes(task)
    constraints = []
    for iv in task.intervals:
        v = Polynomial.variable(iv.subject)
        for e in iv.lower:
            if e.poly is None:
                raise NonPolynomialBound(
                    "bound %s for %s is not polynomial" % (format_expr(e.expr), iv.subject))
            constraints.append(_Constraint(e.poly - v, e.strict))
        for e in iv.upper:
            if e.poly is None:
                raise NonPolynomialBound(
                    "bound %s for %s is not polynomial" % (format_expr(e.expr), iv.subject))
            constraints.append(_Constraint(v - e.poly, e.strict))
    return _eliminate(list(task.variables), constraints, task.integrand,
                      boxes, {})


def _memo_range(poly, boxes, memo):
    key = poly.key()
    got = memo.get(key)
    if got is None:
        got = _poly_range(poly, boxes)
        memo[key] = got
    return got


def _screen_constraints(constraints, boxes, memo):
    """Drop constraints that hold strictly everywhere over the box; None
    when one fails on the whole box, making the cell empty.

    Only ranges strictly below zero may be dropped: a constraint whose
    range touches zero can be the one holding the region inside the box
    (its own constant edge), and removing it would let the region
    escape.  Strictly-negative ranges can never define a box edge, so
    the edge keepers survive and dropping stays exact.
    """
    out = []
    for c in constraints:
        lo, hi = _memo_range(c.poly, boxes, memo)
        if (lo >= 0) if c.strict else (lo > 0):
            return None
        if hi < 0:
            continue
        out.append(c)
    return out


def _prune_ranged(entries, boxes, memo, is_lower):
    """Drop candidate bounds that another candidate always dominates.

    Mirrors the dominance rule of `_prune_side` on (poly, strict)
    pairs, with ranges memoized across the whole elimination.
    """
    if len(entries) < 2:
        return entries
    ranges = [_memo_range(p, boxes, memo) for p, _s in entries]

    def dominated(j):
        rj = ranges[j]
        for i, ri in enumerate(ranges):
            if i == j:
                continue
            if is_lower:
                beaten = rj[1] <= ri[0]  # the other lower is above j's
                mutual = ri[1] <= rj[0]
            else:
                beaten = ri[1] <= rj[0]  # the other upper is below j's
                mutual = rj[1] <= ri[0]
            if beaten and (not mutual or i < j):
                return True
        return False

    kept = [e for j, e in enumerate(entries) if not dominated(j)]
    return kept if kept else entries


def _eliminate(variables, constraints, integrand, boxes, memo,
               screened=False) -> Fraction:
    if not screened:
        constraints = _screen_constraints(constraints, boxes, memo)
    if constraints is None or integrand.is_zero():
        return Fraction(0)
    if not variables:
        return integrand.constant_value()
    v = variables[0]
    rest = variables[1:]
    lower = {}
    upper = {}
    passthrough = []
    for c in constraints:
        degree = c.poly.degree_in(v)
        if degree == 0:
            passthrough.append(c)
            continue
        if degree > 1:
            raise NonLinearBound(
                "constraint %s is non-linear in %s" % (c.poly, v))
        parts = c.poly.coefficients_in(v)
        coeff = parts[1]
        if not coeff.is_constant():
            raise NonLinearBound(
                "eliminating %s needs the sign of %s" % (v, coeff))
        a = coeff.constant_value()
        value = parts.get(0, Polynomial.zero()).scale(Fraction(-1) / a)
        side = upper if a > 0 else lower
        old = side.get(value.key())
        if old is None or (c.strict and not old[1]):
            side[value.key()] = (value, c.strict)
    if not lower or not upper:
        raise UnboundedRegion(
            "no finite %s bound for %s" %
            ("lower" if not lower else "upper", v))
    lows = _prune_ranged(list(lower.values()), boxes, memo, True)
    highs = _prune_ranged(list(upper.values()), boxes, memo, False)
    anti = integrand.antiderivative(v)
    anti_at = {}
    for p, _s in lows:
        anti_at[p.key()] = anti.substitute(v, p)
    for p, _s in highs:
        anti_at[p.key()] = anti.substitute(v, p)
    total = Fraction(0)
    for le, ls in lows:
        for ue, us in highs:
            cell = list(passthrough)
            for other, _s in lows:
                if other is not le:
                    cell.append(_Constraint(other - le, False))
            for other, _s in highs:
                if other is not ue:
                    cell.append(_Constraint(ue - other, False))
            cell.append(_Constraint(le - ue, ls or us))
            cell = _screen_constraints(cell, boxes, memo)
            if cell is None:
                continue
            inner = anti_at[ue.key()] - anti_at[le.key()]
            total += _eliminate(rest, cell, inner, boxes, memo, True)
    return total


# ---------------------------------------------------------------------------
# Numeric backend

def _poly_np(p: Polynomial, env) -> np.ndarray:
    out = 0.0
    for m, c in p.terms():
        t = float(c)
        for name, e in m:
            t = t * env[name] ** e
        out = out + t
    return out


def _expr_np(e: Expr, env):
    if e.kind == "const":
        return float(e.value)
    if e.kind == "var":
        return env[e.value]
    if e.kind == "+":
        return sum(_expr_np(a, env) for a in e.args)
    if e.kind == "-":
        return _expr_np(e.args[0], env) - _expr_np(e.args[1], env)
    if e.kind == "*":
        out = 1.0
        for a in e.args:
            out = out * _expr_np(a, env)
        return out
    if e.kind == "/":
        with np.errstate(divide="ignore", invalid="ignore"):
            return _expr_np(e.args[0], env) / _expr_np(e.args[1], env)
    if e.kind == "^":
        return _expr_np(e.args[0], env) ** e.value
    raise ValueError("unknown expression kind %r" % e.kind)


def _entry_np(entry: BoundEntry, env):
    if entry.poly is not None:
        return _poly_np(entry.poly, env)
    return _expr_np(entry.expr, env)


_INF = (-math.inf, math.inf)


def _interval_mul(a, b):
    products = []
    for x in a:
        for y in b:
            if x == 0 or y == 0:
                products.append(0.0)
            else:
                products.append(x * y)
    return min(products), max(products)


def _expr_box(e: Expr, boxes) -> tuple:
    """Interval arithmetic over per-variable boxes; used to infer a
    bounding box for variables without constant bounds."""
    if e.kind == "const":
        c = float(e.value)
        return (c, c)
    if e.kind == "var":
        return boxes.get(e.value, _INF)
    if e.kind == "+":
        lo = hi = 0.0
        for a in e.args:
            alo, ahi = _expr_box(a, boxes)
            lo, hi = lo + alo, hi + ahi
        return lo, hi
    if e.kind == "-":
        alo, ahi = _expr_box(e.args[0], boxes)
        blo, bhi = _expr_box(e.args[1], boxes)
        return alo - bhi, ahi - blo
    if e.kind == "*":
        out = (1.0, 1.0)
        for a in e.args:
            out = _interval_mul(out, _expr_box(a, boxes))
        return out
    if e.kind == "/":
        nlo, nhi = _expr_box(e.args[0], boxes)
        dlo, dhi = _expr_box(e.args[1], boxes)
        # Covers inverted (empty) denominator boxes as well: any pair of
        # endpoints straddling or touching zero has no finite quotient range.
        if min(dlo, dhi) <= 0 <= max(dlo, dhi):
            return _INF
        candidates = [n / d for n in (nlo, nhi) for d in (dlo, dhi)]
        return min(candidates), max(candidates)
    if e.kind == "^":
        lo, hi = _expr_box(e.args[0], boxes)
        n = e.value
        if n == 0:
            return (1.0, 1.0)
        points = [lo ** n, hi ** n]
        if n % 2 == 0 and lo < 0 < hi:
            points.append(0.0)
        return min(points), max(points)
    raise ValueError("unknown expression kind %r" % e.kind)


def _infer_boxes(task: IntegrationTask):
    """Finite sampling boxes, outermost first so inner bounds can lean
    on outer boxes.  Returns None when some variable's box is empty,
    meaning the whole region is."""
    boxes: dict = {}
    for name, iv in zip(reversed(task.variables), reversed(task.intervals)):
        lo, hi = -math.inf, math.inf
        for e in iv.lower:
            elo, _ehi = _expr_box(e.expr, boxes)
            lo = max(lo, elo)
        for e in iv.upper:
            _elo, ehi = _expr_box(e.expr, boxes)
            hi = min(hi, ehi)
        if lo > hi:
            return None
        boxes[name] = (lo, hi)
    return boxes


def volume_numeric(task: IntegrationTask, rel_tol: float = DEFAULT_REL_TOL,
                   seed: int = 0, max_power: int = 17,
                   require_tol: bool = False):
    """Estimate the volume numerically.

    The innermost variable is integrated in closed form per sample; the
    remaining variables are sampled with scrambled quasi-random points
    in their bounding boxes, with symbolic bounds folded into an
    indicator.  Returns (estimate, standard error, converged); tasks
    whose bounds are all constant evaluate exactly.  With require_tol,
    raises ToleranceNotReached instead of returning converged=False.
    """
    if task.integrand.is_zero():
        return 0.0, 0.0, True
    for iv, name in zip(task.intervals, task.variables):
        if not iv.lower or not iv.upper:
            raise UnboundedRegion(
                "no finite %s bound for %s" %
                ("lower" if not iv.lower else "upper", name))
    if ground_empty(task):
        return 0.0, 0.0, True
    task = prune_intervals(task)
    all_constant = all(
        e.poly is not None and e.poly.is_constant()
        for iv in task.intervals for e in iv.lower + iv.upper)
    if all_constant:
        return float(volume_exact(task)), 0.0, True
    boxes = _infer_boxes(task)
    if boxes is None:
        return 0.0, 0.0, True
    inner, outer = task.variables[0], task.variables[1:]
    for name in outer:
        lo, hi = boxes[name]
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise UnboundedRegion("no finite bounding box for %s" % name)
        if lo > hi:
            return 0.0, 0.0, True
    box_volume = 1.0
    for name in outer:
        lo, hi = boxes[name]
        box_volume *= hi - lo
    if box_volume == 0.0:
        return 0.0, 0.0, True
    anti = task.integrand.antiderivative(inner)
    inner_iv = task.intervals[0]
    outer_ivs = task.intervals[1:]

    def contributions(points: np.ndarray) -> np.ndarray:
        env = {}
        for j, name in enumerate(outer):
            lo, hi = boxes[name]
            env[name] = lo + points[:, j] * (hi - lo)
        ok = np.ones(points.shape[0], dtype=bool)
        with np.errstate(all="ignore"):
            for name, iv in zip(outer, outer_ivs):
                x = env[name]
                for e in iv.lower:
                    if e.poly is not None and e.poly.is_constant():
                        continue  # already in the box
                    ok &= _entry_np(e, env) <= x
                for e in iv.upper:
                    if e.poly is not None and e.poly.is_constant():
                        continue
                    ok &= x <= _entry_np(e, env)
            lo = np.full(points.shape[0], -np.inf)
            for e in inner_iv.lower:
                lo = np.maximum(lo, _entry_np(e, env))
            hi = np.full(points.shape[0], np.inf)
            for e in inner_iv.upper:
                hi = np.minimum(hi, _entry_np(e, env))
            ok &= lo <= hi
            env_hi = dict(env)
            env_hi[inner] = hi
            env_lo = dict(env)
            env_lo[inner] = lo
            vals = _poly_np(anti, env_hi) - _poly_np(anti, env_lo)
        out = np.where(ok, vals, 0.0)
        return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)

    replicates = 8
    samplers = [qmc.Sobol(max(1, len(outer)), scramble=True, bits=64,
                          seed=seed * 64 + r)
                for r in range(replicates)]
    sums = np.zeros(replicates)
    drawn = 0
    chunk = 1 << 10
    while True:
        for r, sob in enumerate(samplers):
            pts = sob.random(chunk)
            sums[r] += contributions(pts).sum()
        drawn += chunk
        means = box_volume * sums / drawn
        estimate = float(means.mean())
        err = float(means.std(ddof=1) / math.sqrt(replicates))
        if err <= max(rel_tol * abs(estimate), 1e-12):
            return estimate, err, True
        if drawn * 2 > (1 << max_power):
            if require_tol:
                raise ToleranceNotReached(
                    "numeric volume stalled at %.3g +- %.3g" % (estimate, err))
            return estimate, err, False
        chunk = drawn  # double the total each round


# ---------------------------------------------------------------------------
# Component splitting and caching

def _entry_vars(entry: BoundEntry):
    if entry.poly is not None:
        return entry.poly.variables()
    return entry.expr.variables()


def split_components(task: IntegrationTask):
    """Split a task into independent sub-tasks whose volumes multiply.

    Variables are connected when a bound or an integrand factor mentions
    both; by Fubini the region and the density factor over the
    connected components, so VOL(task) = constant * prod VOL(part).
    Returns (constant, parts).
    """
    names = task.variables
    index = {v: i for i, v in enumerate(names)}
    constant = Fraction(1)
    factors = []
    if task.factors is not None:
        pool = task.factors
    elif task.integrand.is_constant():
        pool = ()
        constant = task.integrand.constant_value()
    else:
        pool = (task.integrand,)
    for f in pool:
        if f.is_constant():
            constant *= f.constant_value()
        else:
            factors.append(f)
    if not names:
        return constant, []

    parent = list(range(len(names)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    links = []  # (first index, other var indices) per factor
    for f in factors:
        involved = [index[v] for v in f.variables() if v in index]
        links.append(involved)
        for other in involved[1:]:
            union(involved[0], other)
    for i, iv in enumerate(task.intervals):
        for e in iv.lower + iv.upper:
            for v in _entry_vars(e):
                j = index.get(v)
                if j is not None:
                    union(i, j)

    roots = {find(i) for i in range(len(names))}
    if len(roots) == 1:
        return constant, [task]
    members = {}
    for i in range(len(names)):
        members.setdefault(find(i), []).append(i)
    factor_of = {}
    for f, involved in zip(factors, links):
        root = find(involved[0]) if involved else find(0)
        factor_of.setdefault(root, []).append(f)
    parts = []
    for root in sorted(members):
        idxs = members[root]
        part_factors = tuple(factor_of.get(root, ()))
        integrand = Polynomial.constant(1)
        for f in part_factors:
            integrand = integrand * f
        parts.append(IntegrationTask(
            tuple(names[i] for i in idxs),
            tuple(task.intervals[i] for i in idxs),
            integrand, part_factors))
    return constant, parts


class IntegralCache:
    """Per-solve memo from sub-task keys to volume results; the boolean
    scalar stays outside the key, so models differing only in their
    boolean part share one entry."""

    def __init__(self):
        self.data = {}
        self.hits = 0
        self.misses = 0


def _single_volume(task: IntegrationTask, backend: str,
                   cache: Optional[IntegralCache],
                   rel_tol: float, seed: int):
    if cache is not None:
        key = task.key()
        got = cache.data.get(key)
        if got is not None:
            cache.hits += 1
            return got
    if backend == "exact":
        try:
            result = (volume_exact(task), 0.0, True)
        except (NonLinearBound, NonPolynomialBound):
            result = volume_numeric(task, rel_tol, seed)
    elif backend == "numeric":
        result = volume_numeric(task, rel_tol, seed)
    else:
        raise ValueError("unknown backend %r" % backend)
    if cache is not None:
        cache.misses += 1
        cache.data[key] = result
    return result


def cached_volume(task: IntegrationTask, backend: str,
                  cache: Optional[IntegralCache],
                  rel_tol: float = DEFAULT_REL_TOL, seed: int = 0):
    """Compute (or recall) a task volume, one component at a time.

    Returns (value, error, converged).  The exact backend falls back to
    numeric for components whose bounds it cannot eliminate
    symbolically; errors propagate first-order through the product.
    """
    constant, parts = split_components(task)
    if constant == 0:
        return Fraction(0), 0.0, True
    value = constant
    err = 0.0
    converged = True
    for part in parts:
        v, e, c = _single_volume(part, backend, cache, rel_tol, seed)
        converged &= c
        err = abs(float(value)) * e + err * abs(float(v))
        value = value * v
    return value, err, converged
