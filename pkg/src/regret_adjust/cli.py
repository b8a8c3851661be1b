"""Command-line interface.

Exit codes: 0 on success or convergence, 2 when a solve stops on its
iteration or time budget, 1 on errors (including infeasible instances).
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys

import numpy as np

from . import bench, io
from .algorithm import (
    AlgoConfig,
    GivenScenarios,
    NominalOnly,
    RandomExtremalFraction,
    Status,
    evaluate_rule,
    solve_adjustable_worst_case,
    solve_min_max_regret,
)
from .core import InstanceError
from .pump import builtin_instances, default_epsilon

log = logging.getLogger("regret_adjust")

EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def resolve_instance(ref: str):
    """A built-in instance name or a path to an instance file."""
    builtins = builtin_instances()
    if ref in builtins and not os.path.exists(ref):
        return builtins[ref]
    if not os.path.exists(ref):
        raise CliError(f"unknown instance {ref!r} (built-ins: {', '.join(builtins)})")
    return io.load_instance(ref)


def parse_init(spec: str | None, instance):
    if spec is None:
        return None
    if spec == "nominal":
        return NominalOnly()
    if spec.startswith("fraction:"):
        parts = spec.split(":")
        if len(parts) not in (2, 3):
            raise CliError("--init fraction expects fraction:F[:SEED]")
        seed = int(parts[2]) if len(parts) == 3 else 0
        return RandomExtremalFraction(float(parts[1]), seed)
    if spec.startswith("file:"):
        with open(spec[5:], encoding="utf-8") as fh:
            pts = io.parse_scenarios(fh.read(), instance.n_u)
        return GivenScenarios(pts)
    raise CliError(f"unknown --init value {spec!r}")


def grid_scenarios(instance, res: int) -> np.ndarray:
    box = instance.uBox
    if res < 1:
        raise CliError("grid resolution must be positive")
    if res ** box.dim > 1_000_000:
        raise CliError(f"grid:{res} over {box.dim} coordinates is too large")
    axes = [np.linspace(lo, hi, res) if res > 1 else np.array([0.5 * (lo + hi)]) for lo, hi in zip(box.lower, box.upper)]
    return np.array(list(itertools.product(*axes)))


def cmd_solve(args) -> int:
    inst = resolve_instance(args.instance)
    eps = args.epsilon if args.epsilon is not None else default_epsilon(inst.name)
    cfg = AlgoConfig(
        epsilon=eps,
        initialDiscretization=parse_init(args.init, inst),
        maxOuterIterations=args.max_iterations,
        seed=args.seed,
        timeBudget=args.time_budget,
    )
    if args.tol_feas is not None:
        cfg.tolFeas = args.tol_feas
    solve = solve_min_max_regret if args.mode == "regret" else solve_adjustable_worst_case
    rep = solve(inst, cfg)
    label = "max regret" if args.mode == "regret" else "worst-case cost"
    print(f"instance        {inst.name or args.instance}")
    print(f"mode            {args.mode}")
    print(f"status          {rep.status.value}")
    print(f"lower bound     {rep.lowerBound!r}")
    print(f"upper bound     {rep.upperBound!r}  ({label})")
    print(f"iterations      {len(rep.history)}")
    print(f"scenarios       {len(rep.discretizationFinal)}")
    print(f"wall time       {rep.wallTime:.3f}s")
    if rep.message:
        print(f"message         {rep.message}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(io.serialize_report(rep))
    if args.rule:
        with open(args.rule, "w", encoding="utf-8") as fh:
            fh.write(io.serialize_rule(rep.rule))
    return {Status.CONVERGED: EXIT_OK, Status.ITERATION_BUDGET: EXIT_BUDGET}.get(rep.status, EXIT_ERROR)


def cmd_evaluate(args) -> int:
    inst = resolve_instance(args.instance)
    with open(args.rule, encoding="utf-8") as fh:
        rule = io.parse_rule(fh.read())
    if args.scenarios.startswith("grid:"):
        pts = grid_scenarios(inst, int(args.scenarios[5:]))
    elif args.scenarios == "nominal":
        pts = ["nominal"]
    else:
        with open(args.scenarios, encoding="utf-8") as fh:
            pts = io.parse_scenarios(fh.read(), inst.n_u)
    rows = evaluate_rule(inst, rule, pts)
    out = sys.stdout
    names = [f"u{i + 1}" for i in range(inst.n_u)]
    out.write(",".join(names + ["cost", "regret", "violation"]) + "\n")
    for r in rows:
        out.write(",".join([repr(float(v)) for v in r.u] + [repr(r.cost), repr(r.regret), repr(r.violation)]) + "\n")
    return EXIT_OK


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_bench_timing(args) -> int:
    inst = resolve_instance(args.instance)
    fractions = [float(f) for f in args.fractions.split(",")]
    eps = args.epsilon if args.epsilon is not None else default_epsilon(inst.name)
    cfg = AlgoConfig(epsilon=eps, timeBudget=args.time_budget)
    rows = bench.timing_study(inst, fractions, args.repeats, args.seed, cfg, jobs=args.jobs or bench.default_jobs())
    _write(args.csv, bench.timing_csv(rows))
    return EXIT_OK


def cmd_bench_tables(args) -> int:
    names = [n.strip() for n in args.instances.split(",") if n.strip()]
    unknown = [n for n in names if n not in builtin_instances()]
    if unknown:
        raise CliError(f"unknown instance(s) {', '.join(unknown)}")
    results = bench.comparison_tables(names)
    _write(args.csv, bench.table_csv(results))
    return EXIT_OK


def cmd_bench_regions(args) -> int:
    inst = resolve_instance(args.instance)
    rules = []
    for path in (args.rule_a, args.rule_b):
        with open(path, encoding="utf-8") as fh:
            rules.append(io.parse_rule(fh.read()))
    cells = bench.region_comparison(inst, rules[0], rules[1], args.grid)
    _write(args.csv, bench.region_csv(cells))
    return EXIT_OK


def cmd_instances(args) -> int:
    builtins = builtin_instances()
    if args.action == "list":
        for name, inst in builtins.items():
            print(f"{name:12s} n_x={inst.n_x:<3d} n_u={inst.n_u:<3d} parameters={inst.n_decision_parameters}")
        return EXIT_OK
    if not args.name:
        raise CliError("instances dump needs a NAME")
    inst = resolve_instance(args.name)
    sys.stdout.write(io.serialize_instance(inst))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regret-adjust", description="Affinely adjustable min-max-regret robust optimization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("instance", help="built-in name or instance file")
    s.add_argument("--mode", choices=["regret", "worstcase"], default="regret")
    s.add_argument("--epsilon", type=float)
    s.add_argument("--tol-feas", type=float)
    s.add_argument("--init", help="nominal | fraction:F[:SEED] | file:PATH")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iterations", type=int, default=500)
    s.add_argument("--time-budget", type=float, help="seconds")
    s.add_argument("--report", help="write the full report here")
    s.add_argument("--rule", help="write the decision rule here")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="ex-post cost and regret of a rule")
    e.add_argument("instance")
    e.add_argument("rule", help="rule file or report file")
    e.add_argument("--scenarios", required=True, help="scenario file | grid:RES | nominal")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="experiments")
    bsub = b.add_subparsers(dest="bench_command", required=True, parser_class=_Parser)
    t = bsub.add_parser("timing", help="timing versus initial discretization size")
    t.add_argument("instance")
    t.add_argument("--fractions", default="0.01,0.03,0.1,1.0")
    t.add_argument("--repeats", type=int, default=3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epsilon", type=float)
    t.add_argument("--time-budget", type=float, help="seconds per solve")
    t.add_argument("--jobs", type=int, help="parallel repeats (default REGRET_ADJUST_THREADS or 1)")
    t.add_argument("--csv", help="output path (default stdout)")
    t.set_defaults(func=cmd_bench_timing)
    tb = bsub.add_parser("tables", help="compare both concepts on the comparison instances")
    tb.add_argument("--instances", default="sec42-small,sec42-large", help="comma-separated built-in names")
    tb.add_argument("--csv", help="output path (default stdout)")
    tb.set_defaults(func=cmd_bench_tables)
    rg = bsub.add_parser("regions", help="ex-post winner map of two rules")
    rg.add_argument("instance")
    rg.add_argument("rule_a")
    rg.add_argument("rule_b")
    rg.add_argument("--grid", type=int, default=20)
    rg.add_argument("--csv", help="output path (default stdout)")
    rg.set_defaults(func=cmd_bench_regions)

    i = sub.add_parser("instances", help="built-in instances")
    i.add_argument("action", choices=["list", "dump"])
    i.add_argument("name", nargs="?")
    i.set_defaults(func=cmd_instances)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, InstanceError, io.FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
