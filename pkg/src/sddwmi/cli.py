"""Command-line front end: solve, query, count, generate, bench.

Exit codes: 0 on success, 1 for parse or validation problems, 2 when a
resource limit or timeout stops the run.  With --json the only bytes on
stdout are one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict
from fractions import Fraction

from .errors import ResourceLimit, SolverError, TimeoutExceeded
from .genbench import (
    CSV_COLUMNS,
    GenConfig,
    default_sweep,
    generate_problem,
    random_weight_table,
    run_benchmark,
    write_csv,
)
from .pipeline import (
    EXACT,
    NUMERIC,
    SolveOptions,
    conditional_probability,
    count_models,
    wmi,
)
from .problem import LRA, NRA, parse_problem, parse_query, print_problem
from .sdd import BALANCED, RIGHT_LINEAR

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RESOURCE = 2


def _decimal(value) -> str:
    """A 15-significant-digit decimal rendering of a number."""
    return "%.15g" % float(value)


def _solver_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--integrator", choices=[EXACT, NUMERIC],
                        default=EXACT, help="integration backend")
    parser.add_argument("--rel-tol", type=float, default=1e-6,
                        metavar="R", help="relative tolerance (numeric backend)")
    parser.add_argument("--vtree", choices=[BALANCED, RIGHT_LINEAR],
                        default=BALANCED, help="vtree shape for compilation")
    parser.add_argument("--order", choices=["lex", "declared"], default="lex",
                        help="integration variable order")
    parser.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="worker threads for independent integrals")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for the numeric backend's sample stream")
    parser.add_argument("--timeout-s", type=float, default=None, metavar="S",
                        help="cooperative wall-clock budget")
    parser.add_argument("--no-cache", action="store_true",
                        help="disable the integral cache")
    parser.add_argument("--json", action="store_true",
                        help="emit one JSON object instead of text")


def _options(args) -> SolveOptions:
    return SolveOptions(
        integrator=args.integrator,
        rel_tol=args.rel_tol,
        vtree=args.vtree,
        order=args.order,
        jobs=args.jobs,
        seed=args.seed,
        deadline_s=args.timeout_s,
        cache_enabled=not args.no_cache,
    )


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _emit_stats(stats, out):
    for name, value in asdict(stats).items():
        if isinstance(value, float):
            value = "%.3f" % value
        print("%s = %s" % (name, value), file=out)


def cmd_solve(args) -> int:
    text = _read(args.file)
    t0 = time.perf_counter()
    problem = parse_problem(text)
    t_parse_ms = (time.perf_counter() - t0) * 1e3
    value, stats = wmi(problem, _options(args))
    stats.t_parse_ms = t_parse_ms
    stats.t_total_ms += t_parse_ms
    exact = isinstance(value, Fraction)
    if args.json:
        payload = {
            "status": "ok",
            "wmi": str(value) if exact else value,
            "decimal": float(value),
            "error": None if exact else stats.numeric_error,
            "stats": asdict(stats),
        }
        print(json.dumps(payload))
    else:
        print("wmi = %s" % (value if exact else _decimal(value)))
        print("decimal = %s" % _decimal(value))
        if not exact:
            print("error = %s" % _decimal(stats.numeric_error))
        _emit_stats(stats, sys.stdout)
    return EXIT_OK


def cmd_query(args) -> int:
    problem = parse_problem(_read(args.file))
    query = parse_query(_read(args.query), problem)
    evidence = None
    if args.evidence:
        evidence = parse_query(_read(args.evidence), problem)
    result = conditional_probability(problem, query, evidence, _options(args))
    p = result.probability
    exact = isinstance(p, Fraction)
    if args.json:
        payload = {
            "status": "ok",
            "probability": str(p) if exact else p,
            "decimal": float(p),
            "numerator": str(result.numerator),
            "denominator": str(result.denominator),
        }
        print(json.dumps(payload))
    else:
        print(p if exact else _decimal(p))
        if exact:
            print("decimal = %s" % _decimal(p))
        print("numerator = %s" % result.numerator)
        print("denominator = %s" % result.denominator)
    return EXIT_OK


def cmd_count(args) -> int:
    problem = parse_problem(_read(args.file))
    count, n_props = count_models(problem, _options(args))
    if args.json:
        print(json.dumps({"status": "ok", "models": count, "props": n_props}))
    else:
        print("models = %d" % count)
        print("props = %d" % n_props)
    return EXIT_OK


def cmd_generate(args) -> int:
    config = GenConfig(n_vars=args.vars, n_clauses=args.clauses,
                       real_fraction=args.real_frac, theory=args.theory,
                       seed=args.seed)
    problem = generate_problem(config)
    if args.weights:
        import random

        random_weight_table(problem, random.Random(args.seed))
    text = print_problem(problem)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    factors = [float(f) for f in args.clause_factors.split(",") if f]
    if not factors:
        raise ValueError("--clause-factors needs at least one factor")
    configs = default_sweep(vars_min=args.vars_min, vars_max=args.vars_max,
                            clause_factors=factors, reps=args.reps,
                            real_fraction=args.real_frac, theory=args.theory)
    statuses = []

    def watched():
        for row in run_benchmark(configs, timeout_s=args.timeout_s):
            statuses.append(row.status)
            if not args.quiet:
                print("%3d vars %3d clauses seed=%-6d %-7s %8.2fs"
                      % (row.n_vars, row.n_clauses, row.seed, row.status,
                         row.t_total_ms / 1e3), file=sys.stderr)
            yield row

    if args.csv:
        count = write_csv(watched(), args.csv)
        print("wrote %d rows to %s" % (count, args.csv), file=sys.stderr)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(CSV_COLUMNS)
        for row in watched():
            writer.writerow([getattr(row, c) for c in CSV_COLUMNS])
    if any(s == "timeout" for s in statuses):
        return EXIT_RESOURCE
    if any(s == "error" for s in statuses):
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sddwmi",
        description="Weighted model integration over hybrid knowledge bases.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="integrate a problem file")
    p.add_argument("file", help="problem file")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("query", help="conditional probability of a query")
    p.add_argument("file", help="problem file")
    p.add_argument("--query", required=True, metavar="QFILE",
                   help="file with one (formula ...) clause")
    p.add_argument("--evidence", metavar="EFILE",
                   help="file with one (formula ...) clause")
    _solver_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("count", help="model count of the abstraction")
    p.add_argument("file", help="problem file")
    _solver_flags(p)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("generate", help="emit a random problem")
    p.add_argument("--vars", type=int, required=True, metavar="N")
    p.add_argument("--clauses", type=int, required=True, metavar="M")
    p.add_argument("--real-frac", type=float, default=0.5, metavar="F")
    p.add_argument("--theory", choices=[LRA, NRA], default=LRA)
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--weights", action="store_true",
                   help="attach a random per-literal weight table")
    p.add_argument("-o", "--output", default="-", metavar="OUT",
                   help="output path (default stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="run the benchmark sweep")
    p.add_argument("--vars-min", type=int, default=2)
    p.add_argument("--vars-max", type=int, default=28)
    p.add_argument("--clause-factors", default="0.7,1.0,1.5",
                   help="comma-separated clause/variable ratios")
    p.add_argument("--reps", type=int, default=2)
    p.add_argument("--real-frac", type=float, default=0.5)
    p.add_argument("--theory", choices=[LRA, NRA], default=LRA)
    p.add_argument("--timeout-s", type=float, default=300.0)
    p.add_argument("--csv", metavar="OUT", help="CSV path (default stdout)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-row progress on stderr")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    json_mode = getattr(args, "json", False)

    def fail(code, status, err):
        message = "%s: %s" % (type(err).__name__, err)
        print(message, file=sys.stderr)
        if json_mode:
            print(json.dumps({"status": status, "error": message}))
        return code

    try:
        return args.func(args)
    except TimeoutExceeded as err:
        return fail(EXIT_RESOURCE, "timeout", err)
    except ResourceLimit as err:
        return fail(EXIT_RESOURCE, "resource-limit", err)
    except (SolverError, OSError, ValueError) as err:
        return fail(EXIT_INPUT, "error", err)


if __name__ == "__main__":
    sys.exit(main())
