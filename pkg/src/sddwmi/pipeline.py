"""End-to-end solving: abstract, compile, enumerate, integrate.

`wmi` runs the full pipeline on one problem and reports stage timings;
`conditional_probability` conditions one query on optional evidence by
taking a ratio of two such runs over a shared volume cache.  The module
also houses a deliberately naive sampling oracle, `brute_force_wmi`,
that shares no machinery with the pipeline beyond the parser; the test
suite uses it for cross-checking.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .abstraction import VarOrder, abstract
from .errors import (
    NotPolynomial,
    TimeoutExceeded,
    TooLarge,
    UnboundedRegion,
    ZeroEvidence,
)
from .expr import Polynomial
from .integrate import (
    DEFAULT_REL_TOL,
    GroundScreen,
    IntegralCache,
    LeadIndex,
    _expr_np,
    _poly_np,
    build_task,
    cached_volume,
    expand_dont_cares,
    expansion_targets,
    ground_empty,
)
from .problem import (
    BoolAtom,
    F_AND,
    F_ATOM,
    F_CONST,
    F_IFF,
    F_NOT,
    F_OR,
    Formula,
    Problem,
    canonical_comparison,
)
from .sdd import BALANCED, SddManager, build_vtree, compile_formula

EXACT = "exact"
NUMERIC = "numeric"


@dataclass
class SolveOptions:
    integrator: str = EXACT
    rel_tol: float = DEFAULT_REL_TOL
    vtree: str = BALANCED
    order: str = "lex"  # integration order source: "lex" or "declared"
    jobs: int = 1
    node_cap: int = 10_000_000
    seed: int = 0
    deadline_s: Optional[float] = None
    cache_enabled: bool = True


@dataclass
class SolveStats:
    n_props: int = 0
    model_count: int = 0  # total models of the skeleton
    n_models: int = 0  # partial models enumerated
    n_tasks: int = 0  # integration tasks after expansion and dedup
    cache_hits: int = 0
    cache_misses: int = 0
    discarded_infeasible: int = 0
    numeric_error: float = 0.0
    all_converged: bool = True
    t_parse_ms: float = 0.0  # filled by callers that parse text
    t_abstract_ms: float = 0.0
    t_compile_ms: float = 0.0
    t_enumerate_ms: float = 0.0
    t_integrate_ms: float = 0.0
    t_total_ms: float = 0.0


class Deadline:
    """Cooperative wall-clock budget checked between pipeline steps."""

    def __init__(self, seconds: Optional[float]):
        self.at = None if seconds is None else time.monotonic() + seconds

    def check(self):
        if self.at is not None and time.monotonic() > self.at:
            raise TimeoutExceeded("solve exceeded its deadline")


_DONE = object()


def wmi(problem: Problem, opts: Optional[SolveOptions] = None,
        cache: Optional[IntegralCache] = None):
    """Weighted model integral of a problem.

    Returns (value, SolveStats); the value is a Fraction when every
    task went through the exact backend and a float otherwise.
    """
    opts = opts or SolveOptions()
    deadline = Deadline(opts.deadline_s)
    if cache is None and opts.cache_enabled:
        cache = IntegralCache()
    hits0 = cache.hits if cache else 0
    misses0 = cache.misses if cache else 0
    stats = SolveStats()
    t0 = time.perf_counter()

    pkb, amap = abstract(problem, VarOrder.from_problem(problem, opts.order))
    stats.n_props = amap.n_props
    # The model space ranges over the declared vocabulary: a boolean
    # variable that occurs in neither formula nor weights never becomes
    # a proposition, but both its values remain models, so each one
    # doubles the total.
    used_bools = {r.atom.name for r in amap.refinements
                  if isinstance(r.atom, BoolAtom)}
    free_bools = sum(1 for name in problem.bool_vars
                     if name not in used_bools)
    stats.t_abstract_ms = (time.perf_counter() - t0) * 1e3
    deadline.check()

    t1 = time.perf_counter()
    if amap.n_props == 0:
        # The skeleton mentions no propositions; no diagram to build.
        satisfiable = pkb.evaluate({})
        stats.model_count = 1 if satisfiable else 0
        models = iter([{}]) if satisfiable else iter(())
    else:
        vtree = build_vtree(range(amap.n_props), opts.vtree)
        manager = SddManager(vtree, node_cap=opts.node_cap)
        node = compile_formula(pkb, manager)
        stats.model_count = manager.model_count(node, amap.n_props)
        models = manager.enumerate_models(node)
    stats.t_compile_ms = (time.perf_counter() - t1) * 1e3
    deadline.check()

    lead_index = LeadIndex(amap)
    weights = problem.weights
    targets = expansion_targets(amap, weights)
    # Only assignments over these ids can change a model's density; the
    # rest of a partial model folds into a power-of-two multiplicity.
    relevant = set(targets)
    for entries in lead_index.by_var.values():
        for prop_id, _bound in entries:
            relevant.add(prop_id)
    n_relevant = len(relevant)
    total_exact = Fraction(0)
    total_float = 0.0
    mixed = False
    err_acc = 0.0

    def integrate_one(task, scalar, multiplicity):
        nonlocal total_exact, total_float, mixed, err_acc
        value, err, converged = cached_volume(
            task, opts.integrator, cache, opts.rel_tol, opts.seed)
        stats.all_converged &= converged
        if isinstance(value, Fraction):
            total_exact += value * scalar * multiplicity
        else:
            mixed = True
            total_float += value * float(scalar) * multiplicity
            err_acc += err * abs(float(scalar)) * multiplicity

    # Bucket models by their relevant sub-assignment; each distinct
    # signature is expanded and integrated once, weighted by the number
    # of total models it stands for.
    sig_weight = {}
    while True:
        t = time.perf_counter()
        model = next(models, _DONE)
        stats.t_enumerate_ms += (time.perf_counter() - t) * 1e3
        if model is _DONE:
            break
        stats.n_models += 1
        deadline.check()
        t = time.perf_counter()
        pairs = sorted((p, v) for p, v in model.items() if p in relevant)
        free = (amap.n_props - len(model)) - (n_relevant - len(pairs))
        sig = tuple(pairs)
        sig_weight[sig] = sig_weight.get(sig, 0) + (1 << free)
        stats.t_integrate_ms += (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    screen = GroundScreen(amap)
    contribs = []  # (multiplicity, scalar, task)
    for sig, multiplicity in sig_weight.items():
        deadline.check()
        if screen.empty(sig):
            stats.discarded_infeasible += 1
            continue
        expanded, _mult = expand_dont_cares(dict(sig), amap, weights, targets)
        for m in expanded:
            task, scalar = build_task(m, amap, weights, lead_index)
            stats.n_tasks += 1
            if scalar == 0:
                continue
            if ground_empty(task):
                stats.discarded_infeasible += 1
                continue
            contribs.append((multiplicity, scalar, task))
    if opts.jobs > 1 and contribs:
        unique = {}
        for _m, _s, task in contribs:
            unique.setdefault(task.key(), task)
        with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
            list(pool.map(
                lambda task: cached_volume(
                    task, opts.integrator, cache, opts.rel_tol, opts.seed),
                unique.values()))
    for multiplicity, scalar, task in contribs:
        deadline.check()
        integrate_one(task, scalar, multiplicity)
    stats.t_integrate_ms += (time.perf_counter() - t) * 1e3

    if free_bools:
        scale = 1 << free_bools
        total_exact *= scale
        total_float *= scale
        err_acc *= scale
    if cache is not None:
        stats.cache_hits = cache.hits - hits0
        stats.cache_misses = cache.misses - misses0
    stats.t_total_ms = (time.perf_counter() - t0) * 1e3
    value = total_exact if not mixed else float(total_exact) + total_float
    stats.numeric_error = err_acc
    return value, stats


def count_models(problem: Problem, opts: Optional[SolveOptions] = None):
    """Model count of the propositional skeleton.

    Returns (count, n_props): the number of total assignments over the
    abstraction's propositions that satisfy the skeleton, and how many
    propositions there are.
    """
    opts = opts or SolveOptions()
    pkb, amap = abstract(problem, VarOrder.from_problem(problem, opts.order))
    if amap.n_props == 0:
        return (1 if pkb.evaluate({}) else 0), 0
    vtree = build_vtree(range(amap.n_props), opts.vtree)
    manager = SddManager(vtree, node_cap=opts.node_cap)
    node = compile_formula(pkb, manager)
    return manager.model_count(node, amap.n_props), amap.n_props


@dataclass
class ConditionalResult:
    probability: object  # Fraction when both volumes are exact
    numerator: object
    denominator: object
    query_stats: SolveStats = field(repr=False, default=None)
    evidence_stats: SolveStats = field(repr=False, default=None)


def conditional_probability(problem: Problem, query: Formula,
                            evidence: Optional[Formula] = None,
                            opts: Optional[SolveOptions] = None) -> ConditionalResult:
    """Pr(query | evidence) under the problem's constraints and weights.

    Both volumes share one cache, so regions common to the conditioned
    and unconditioned runs integrate once.  Raises ZeroEvidence when the
    denominator vanishes.
    """
    opts = opts or SolveOptions()
    cache = IntegralCache() if opts.cache_enabled else None
    conditioned = problem if evidence is None else problem.conjoin(evidence)
    den, den_stats = wmi(conditioned, opts, cache=cache)
    if den == 0 or (not isinstance(den, Fraction) and abs(den) < 1e-12):
        raise ZeroEvidence("evidence has zero weighted volume")
    num, num_stats = wmi(conditioned.conjoin(query), opts, cache=cache)
    if isinstance(num, Fraction) and isinstance(den, Fraction):
        probability = num / den
    else:
        probability = float(num) / float(den)
    return ConditionalResult(probability, num, den, num_stats, den_stats)


# ---------------------------------------------------------------------------
# Independent sampling oracle

def _conjuncts(f: Formula):
    stack = [f]
    while stack:
        g = stack.pop()
        if g.kind == F_AND:
            stack.extend(g.children)
        else:
            yield g


def _constant_box(problem: Problem) -> dict:
    """Per-variable [lo, hi] read off single-variable constant
    comparisons among the top-level conjuncts."""
    box = {v: [None, None] for v in problem.real_vars}
    for g in _conjuncts(problem.formula):
        if g.kind != F_ATOM or isinstance(g.atom, BoolAtom):
            continue
        try:
            got = canonical_comparison(g.atom)
        except NotPolynomial:
            continue
        if got[0] == "const" or got[0] == "=":
            continue
        op, poly = got
        names = poly.variables()
        if len(names) != 1:
            continue
        v = next(iter(names))
        if poly.degree_in(v) != 1:
            continue
        parts = poly.coefficients_in(v)
        a = parts[1].constant_value()
        c = parts.get(0, Polynomial.zero()).constant_value()
        edge = float(-c / a)
        if a > 0:
            if box[v][1] is None or edge < box[v][1]:
                box[v][1] = edge
        else:
            if box[v][0] is None or edge > box[v][0]:
                box[v][0] = edge
    for v, (lo, hi) in box.items():
        if lo is None or hi is None:
            raise UnboundedRegion(
                "no constant %s bound for %s at the top level" %
                ("upper" if hi is None else "lower", v))
    return {v: (lo, hi) for v, (lo, hi) in box.items()}


def _atom_truth_np(atom, env):
    try:
        got = canonical_comparison(atom)
    except NotPolynomial:
        got = None
    with np.errstate(all="ignore"):
        if got is not None:
            op, poly = got
            if op == "const":
                size = len(next(iter(env.values()))) if env else 1
                return np.full(size, bool(poly))
            value = _poly_np(poly, env)
            if op == "<":
                return value < 0
            if op == "<=":
                return value <= 0
            return value == 0
        lhs = _expr_np(atom.lhs, env)
        rhs = _expr_np(atom.rhs, env)
        if atom.op == "<":
            return lhs < rhs
        if atom.op == "<=":
            return lhs <= rhs
        if atom.op == ">":
            return lhs > rhs
        if atom.op == ">=":
            return lhs >= rhs
        return lhs == rhs


def _truth_np(f: Formula, env, bools, size):
    if f.kind == F_CONST:
        return np.full(size, f.value)
    if f.kind == F_ATOM:
        if isinstance(f.atom, BoolAtom):
            return np.full(size, bools[f.atom.name])
        return _atom_truth_np(f.atom, env)
    if f.kind == F_NOT:
        return ~_truth_np(f.children[0], env, bools, size)
    if f.kind == F_AND:
        out = np.ones(size, dtype=bool)
        for c in f.children:
            out &= _truth_np(c, env, bools, size)
        return out
    if f.kind == F_OR:
        out = np.zeros(size, dtype=bool)
        for c in f.children:
            out |= _truth_np(c, env, bools, size)
        return out
    if f.kind == "=>":
        a = _truth_np(f.children[0], env, bools, size)
        b = _truth_np(f.children[1], env, bools, size)
        return ~a | b
    if f.kind == F_IFF:
        a = _truth_np(f.children[0], env, bools, size)
        b = _truth_np(f.children[1], env, bools, size)
        return a == b
    raise ValueError("unknown formula kind %r" % f.kind)


def brute_force_wmi(problem: Problem, n_points: int = 1 << 16, seed: int = 0,
                    replicates: int = 4):
    """Estimate the weighted model integral by direct sampling.

    Evaluates the original formula and weights pointwise over the
    constant bounding box, once per declared boolean assignment, without
    touching abstraction, diagrams, or interval arithmetic.  Returns
    (value, standard error); purely boolean problems are summed exactly.
    """
    n_bool = len(problem.bool_vars)
    if n_bool > 16:
        raise TooLarge("%d boolean variables is past the oracle's budget" % n_bool)
    combos = []
    for bits in range(1 << n_bool):
        combos.append({name: bool(bits >> i & 1)
                       for i, name in enumerate(problem.bool_vars)})

    if not problem.real_vars:
        total = Fraction(0)
        for bools in combos:
            if not problem.formula.evaluate({}, bools):
                continue
            factor = Fraction(1)
            for (key, pol), w in problem.weights.items():
                atom = problem.weights.display_atom(key)
                if not isinstance(atom, BoolAtom):
                    continue
                if bools[atom.name] == pol:
                    factor *= w.evaluate({})
            total += factor
        return total, 0.0

    box = _constant_box(problem)
    volume = 1.0
    for lo, hi in box.values():
        volume *= hi - lo
    if volume <= 0:
        return 0.0, 0.0
    names = list(problem.real_vars)

    weight_keys = problem.weights.atom_keys()
    means = []
    for r in range(replicates):
        sob = qmc.Sobol(len(names), scramble=True, bits=64, seed=seed * 8 + r)
        pts = sob.random(n_points)
        env = {}
        for j, v in enumerate(names):
            lo, hi = box[v]
            env[v] = lo + pts[:, j] * (hi - lo)
        # Weight factors of comparison atoms do not depend on the
        # boolean assignment, so compute them once per replicate.
        real_density = np.ones(n_points)
        bool_weight_atoms = []
        with np.errstate(all="ignore"):
            for key in weight_keys:
                atom = problem.weights.display_atom(key)
                if isinstance(atom, BoolAtom):
                    # Either polarity's weight may mention real variables,
                    # so keep both per-point arrays and pick per assignment.
                    bool_weight_atoms.append((
                        atom,
                        _expr_np(problem.weights.weight(key, True), env),
                        _expr_np(problem.weights.weight(key, False), env)))
                    continue
                truth = _atom_truth_np(atom, env)
                w_true = _expr_np(problem.weights.weight(key, True), env)
                w_false = _expr_np(problem.weights.weight(key, False), env)
                real_density = real_density * np.where(truth, w_true, w_false)
        acc = 0.0
        for bools in combos:
            density = real_density
            for atom, w_true, w_false in bool_weight_atoms:
                density = density * (w_true if bools[atom.name] else w_false)
            truth = _truth_np(problem.formula, env, bools, n_points)
            contrib = np.where(truth, density, 0.0)
            contrib = np.nan_to_num(contrib, nan=0.0, posinf=0.0, neginf=0.0)
            acc += float(contrib.mean())
        means.append(volume * acc)
    estimate = float(np.mean(means))
    err = float(np.std(means, ddof=1) / math.sqrt(replicates))
    return estimate, err
