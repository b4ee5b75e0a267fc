"""Random problem generation and the benchmark sweep.

Generated problems are conjunctions of random clauses under a top-level
"sandwich": every real variable gets constant lower and upper bounds, so
weighted volumes are always finite.  Generation is driven by a seeded
`random.Random` (Mersenne Twister), making every problem reproducible
from its configuration alone.
"""

from __future__ import annotations

import csv
import math
import random
import time
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Iterable, Iterator, Optional

from . import expr as ex
from .errors import SolverError, TimeoutExceeded
from .problem import (
    BoolAtom,
    Comparison,
    LRA,
    Problem,
    WeightTable,
    atom_key,
    f_and,
    f_atom,
    f_not,
    f_or,
    parse_problem,
    print_problem,
)
from .pipeline import SolveOptions, wmi

BOUND_RANGE = 1000  # sandwich constants live in [-BOUND_RANGE, BOUND_RANGE]


@dataclass(frozen=True)
class GenConfig:
    n_vars: int
    n_clauses: int
    real_fraction: float = 0.5
    theory: str = LRA
    seed: int = 0


def _sandwich(rng: random.Random, name: str):
    lo = rng.randint(-BOUND_RANGE, BOUND_RANGE - 1)
    hi = rng.randint(lo + 1, BOUND_RANGE)
    v = ex.var(name)
    return (f_atom(Comparison("<", ex.const(lo), v)),
            f_atom(Comparison("<", v, ex.const(hi))),
            (lo, hi))


def _interval_unit(rng: random.Random, name: str, lo, hi):
    """A two-sided interval for `name` from constant or symbolic bounds."""
    v = ex.var(name)
    return f_and(f_atom(Comparison("<", lo, v)),
                 f_atom(Comparison("<", v, hi)))


def _side_sum(rng: random.Random, others):
    k = min(len(others), rng.randint(1, 2))
    return ex.add(*[ex.var(r) for r in rng.sample(others, k)])


def _side_product(rng: random.Random, others):
    k = min(len(others), rng.randint(1, 2))
    factors = [ex.var(r) for r in rng.sample(others, k)]
    coeff = rng.choice([c for c in range(-9, 10) if c])
    return ex.mul(ex.const(coeff), *factors)


def generate_problem(config: GenConfig) -> Problem:
    """A random satisfiable-looking problem per the configuration.

    The formula is the conjunction of one constant sandwich per real
    variable and `n_clauses` random disjunctions of one to three units.
    Each unit picks a variable: boolean variables become literals, and
    real variables become two-sided intervals whose bounds are either
    constants inside the variable's sandwich (probability one half) or
    sums of other real variables (products outside lra).
    """
    if config.n_vars < 1:
        raise ValueError("need at least one variable")
    rng = random.Random(config.seed)
    n_real = math.ceil(config.n_vars * config.real_fraction)
    n_bool = config.n_vars - n_real
    reals = ["x%d" % i for i in range(n_real)]
    bools = ["b%d" % i for i in range(n_bool)]

    conjuncts = []
    boxes = {}
    for name in reals:
        low, high, box = _sandwich(rng, name)
        conjuncts.extend((low, high))
        boxes[name] = box

    def unit():
        name = rng.choice(bools + reals)
        if name in boxes:
            others = [r for r in reals if r != name]
            if others and rng.random() >= 0.5:
                side = _side_sum if config.theory == LRA else _side_product
                return _interval_unit(rng, name, side(rng, others),
                                      side(rng, others))
            lo, hi = boxes[name]
            a = rng.randint(lo, hi - 1)
            b = rng.randint(a + 1, hi)
            return _interval_unit(rng, name, ex.const(a), ex.const(b))
        lit = f_atom(BoolAtom(name))
        return lit if rng.random() < 0.5 else f_not(lit)

    for _ in range(config.n_clauses):
        conjuncts.append(f_or(*[unit() for _ in range(rng.randint(1, 3))]))

    weights = WeightTable()
    return Problem(config.theory, tuple(bools), tuple(reals),
                   f_and(*conjuncts), weights)


def random_weight_table(problem: Problem, rng: random.Random,
                        max_atoms: int = 3) -> None:
    """Attach random positive weights to a few of the problem's atoms.

    Weights are rational constants or degree-one polynomials kept
    positive over the sandwich box, assigned to random literals in
    place.
    """
    atoms = [a for a in problem.atoms()
             if atom_key(a)[0] != "const"]
    rng.shuffle(atoms)
    for atom in atoms[:rng.randint(1, max_atoms)]:
        pick = rng.random()
        if pick < 0.5 or not problem.real_vars:
            value = ex.const(Fraction(rng.randint(1, 8), rng.randint(1, 4)))
        else:
            name = rng.choice(problem.real_vars)
            offset = ex.const(BOUND_RANGE + 1)
            value = (ex.add(offset, ex.var(name)) if rng.random() < 0.5
                     else ex.sub(offset, ex.var(name)))
        problem.weights.set_weight(atom, rng.random() < 0.8, value)


# ---------------------------------------------------------------------------
# Benchmark sweep

@dataclass
class BenchRow:
    n_vars: int
    n_clauses: int
    real_fraction: float
    theory: str
    seed: int
    status: str
    t_parse_ms: float = 0.0
    t_abstract_ms: float = 0.0
    t_compile_ms: float = 0.0
    t_enumerate_ms: float = 0.0
    t_integrate_ms: float = 0.0
    t_total_ms: float = 0.0
    n_props: int = 0
    n_models: int = 0
    cache_hits: int = 0
    wmi_value: str = ""


CSV_COLUMNS = [f.name for f in fields(BenchRow)]


def default_sweep(vars_min: int = 2, vars_max: int = 28,
                  clause_factors: Iterable[float] = (0.7, 1.0, 1.5),
                  reps: int = 2, real_fraction: float = 0.5,
                  theory: str = LRA) -> Iterator[GenConfig]:
    """The default benchmark grid; seeds derive from the coordinates."""
    for n_vars in range(vars_min, vars_max + 1):
        for fi, factor in enumerate(clause_factors):
            for rep in range(reps):
                yield GenConfig(
                    n_vars=n_vars,
                    n_clauses=max(1, round(n_vars * factor)),
                    real_fraction=real_fraction,
                    theory=theory,
                    seed=n_vars * 1000 + fi * 10 + rep)


def run_benchmark(configs: Iterable[GenConfig],
                  opts: Optional[SolveOptions] = None,
                  timeout_s: float = 300.0) -> Iterator[BenchRow]:
    """Generate, round-trip, and solve each configuration.

    Parsing is timed on the printed text so the parse column measures
    real work.  Solves run under a cooperative deadline; rows carry
    status ok, timeout, or error.
    """
    base = opts or SolveOptions()
    for config in configs:
        row = BenchRow(config.n_vars, config.n_clauses, config.real_fraction,
                       config.theory, config.seed, "ok")
        try:
            text = print_problem(generate_problem(config))
            t0 = time.perf_counter()
            problem = parse_problem(text)
            row.t_parse_ms = (time.perf_counter() - t0) * 1e3
            run_opts = SolveOptions(**{**base.__dict__, "deadline_s": timeout_s})
            value, stats = wmi(problem, run_opts)
            row.t_abstract_ms = stats.t_abstract_ms
            row.t_compile_ms = stats.t_compile_ms
            row.t_enumerate_ms = stats.t_enumerate_ms
            row.t_integrate_ms = stats.t_integrate_ms
            row.t_total_ms = stats.t_total_ms
            row.n_props = stats.n_props
            row.n_models = stats.n_models
            row.cache_hits = stats.cache_hits
            row.wmi_value = (str(value) if isinstance(value, Fraction)
                             else repr(value))
        except TimeoutExceeded:
            row.status = "timeout"
        except SolverError as err:
            row.status = "error"
            row.wmi_value = type(err).__name__
        yield row


def write_csv(rows: Iterable[BenchRow], path: str) -> int:
    """Stream benchmark rows to a CSV file; returns the row count."""
    count = 0
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, c) for c in CSV_COLUMNS])
            count += 1
    return count
