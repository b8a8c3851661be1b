"""Experiment harness: timing versus initial discretization, concept
comparison tables and ex-post region maps.

Wall times are reported but only iteration counts are deterministic; the
acceptance checks built on these tables look at trends.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field
import io as _io
import math
import os

import numpy as np

from .algorithm import (
    AddedBy,
    AlgoConfig,
    RandomExtremalFraction,
    SolveReport,
    Status,
    evaluate_rule,
    solve_adjustable_worst_case,
    solve_min_max_regret,
)
from .core import DecisionRule, ProblemInstance
from .pump import builtin_instances, default_epsilon
from .subproblems import max_cost, max_regret_global

# --------------------------------------------------------------------------
# timing study


@dataclass
class RepeatResult:
    fraction: float
    repeat: int
    seed: int
    status: str
    stage1: float
    stage2: float
    stage3: float
    total: float
    outerIterations: int
    infeasibilityAdditions: int
    regretAdditions: int
    initialSize: int
    finalSize: int
    lowerBound: float
    upperBound: float
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class TimingRow:
    fraction: float
    repeats: int
    failures: int
    stage1: float
    stage2: float
    stage3: float
    total: float
    outerIterations: float
    infeasibilityAdditions: float
    regretAdditions: float
    initialSize: float
    finalSize: float
    budgetExhausted: int
    raw: list = field(default_factory=list, repr=False)


TIMING_COLUMNS = [
    "fraction",
    "repeats",
    "failures",
    "budgetExhausted",
    "stage1",
    "stage2",
    "stage3",
    "total",
    "outerIterations",
    "infeasibilityAdditions",
    "regretAdditions",
    "initialSize",
    "finalSize",
]


def _one_repeat(instance, fraction, repeat, seed, base: AlgoConfig) -> RepeatResult:
    cfg = AlgoConfig(**{**asdict(base), "initialDiscretization": RandomExtremalFraction(fraction, seed), "seed": seed})
    try:
        rep = solve_min_max_regret(instance, cfg)
    except Exception as exc:  # recorded and excluded from the means
        nan = math.nan
        return RepeatResult(fraction, repeat, seed, "error", nan, nan, nan, nan, 0, 0, 0, 0, 0, nan, nan, repr(exc))
    tot = rep.stage_totals()
    n_init = sum(1 for o in rep.origins if o is AddedBy.INITIAL)
    return RepeatResult(
        fraction,
        repeat,
        seed,
        rep.status.value,
        tot["stage1"],
        tot["stage2"],
        tot["stage3"],
        tot["stage1"] + tot["stage2"] + tot["stage3"],
        len(rep.history),
        rep.additions(AddedBy.INFEASIBILITY),
        rep.additions(AddedBy.MAX_REGRET),
        n_init,
        len(rep.discretizationFinal),
        rep.lowerBound,
        rep.upperBound,
        "" if rep.status is not Status.INSTANCE_INFEASIBLE else rep.message,
    )


def timing_study(
    instance: ProblemInstance,
    fractions,
    repeats: int = 3,
    seed: int = 0,
    config: AlgoConfig | None = None,
    jobs: int = 1,
) -> list[TimingRow]:
    """Solve once per (fraction, repeat) with random extremal initial sets.

    Repeat r of every fraction uses generator seed ``seed + r``.  With
    ``jobs > 1`` repeats run in separate processes.
    """
    fractions = [float(f) for f in fractions]
    if any(not (0 < f <= 1) for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    base = config or AlgoConfig(epsilon=default_epsilon(instance.name))
    tasks = [(f, r, seed + r) for f in fractions for r in range(repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_one_repeat, instance, f, r, s, base) for f, r, s in tasks]
            results = [fu.result() for fu in futs]
    else:
        results = [_one_repeat(instance, f, r, s, base) for f, r, s in tasks]

    rows = []
    for f in fractions:
        raw = [res for res in results if res.fraction == f]
        good = [res for res in raw if res.ok]

        def mean(attr):
            return float(np.mean([getattr(r, attr) for r in good])) if good else math.nan

        rows.append(
            TimingRow(
                f,
                len(raw),
                len(raw) - len(good),
                mean("stage1"),
                mean("stage2"),
                mean("stage3"),
                mean("total"),
                mean("outerIterations"),
                mean("infeasibilityAdditions"),
                mean("regretAdditions"),
                mean("initialSize"),
                mean("finalSize"),
                sum(1 for r in good if r.status == Status.ITERATION_BUDGET.value),
                raw,
            )
        )
    return rows


def timing_csv(rows: list[TimingRow]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for row in rows:
        w.writerow([getattr(row, c) for c in TIMING_COLUMNS])
    return buf.getvalue()


# --------------------------------------------------------------------------
# concept comparison


# Reference values of the three criteria for the two instances of the
# comparison study, per (instance, mode).
REFERENCE_VALUES = {
    ("sec42-small", "worstcase"): {"worst-case": 616.962, "nominal": 433.1376, "max-regret": 249.2559},
    ("sec42-small", "regret"): {"worst-case": 616.9629, "nominal": 430.8811, "max-regret": 227.2854},
    ("sec42-large", "worstcase"): {"worst-case": 3708.5053, "nominal": 2752.0929, "max-regret": 837.8284},
    ("sec42-large", "regret"): {"worst-case": 3717.1894, "nominal": 2581.0971, "max-regret": 496.0199},
}
CRITERIA = ("worst-case", "nominal", "max-regret")
TABLE_COLUMNS = ["instance", "mode", "criterion", "value", "tolerance-met"]


@dataclass
class CriteriaValues:
    worst_case: float
    nominal: float
    max_regret: float
    max_regret_upper: float

    def as_dict(self) -> dict:
        return {"worst-case": self.worst_case, "nominal": self.nominal, "max-regret": self.max_regret}


def rule_criteria(instance: ProblemInstance, rule: DecisionRule, eps_bnb: float) -> CriteriaValues:
    """Worst-case cost, nominal cost and global max regret of one rule."""
    wc = max_cost(instance, rule).cost
    nominal = evaluate_rule(instance, rule, ["nominal"])[0].cost if instance.nominal is not None else math.nan
    mr = max_regret_global(instance, rule, eps_bnb)
    return CriteriaValues(wc, nominal, mr.regretValue, mr.upperBound)


@dataclass
class ComparisonResult:
    instance: str
    reports: dict  # mode -> SolveReport
    values: dict  # mode -> CriteriaValues

    def rows(self, rel_tol: float = 0.01) -> list[dict]:
        out = []
        for mode in ("worstcase", "regret"):
            ref = REFERENCE_VALUES.get((self.instance, mode), {})
            vals = self.values[mode].as_dict()
            for crit in CRITERIA:
                v = vals[crit]
                r = ref.get(crit)
                met = "" if r is None else str(bool(abs(v - r) <= rel_tol * abs(r))).lower()
                out.append({"instance": self.instance, "mode": mode, "criterion": crit, "value": v, "tolerance-met": met})
        return out

    def best_labels(self) -> dict:
        """criterion -> mode with the smaller value."""
        a, b = self.values["worstcase"].as_dict(), self.values["regret"].as_dict()
        return {c: ("worstcase" if a[c] <= b[c] else "regret") for c in CRITERIA}


def reference_best_labels(instance: str) -> dict:
    a = REFERENCE_VALUES[(instance, "worstcase")]
    b = REFERENCE_VALUES[(instance, "regret")]
    return {c: ("worstcase" if a[c] <= b[c] else "regret") for c in CRITERIA}


def compare_concepts(instance: ProblemInstance, epsilon: float | None = None) -> ComparisonResult:
    """Solve both robustness concepts and evaluate each rule on all three criteria."""
    eps = epsilon if epsilon is not None else default_epsilon(instance.name)
    cfg = AlgoConfig(epsilon=eps)
    reports = {
        "worstcase": solve_adjustable_worst_case(instance, cfg),
        "regret": solve_min_max_regret(instance, cfg),
    }
    values = {mode: rule_criteria(instance, rep.rule, cfg.eps_bnb) for mode, rep in reports.items()}
    return ComparisonResult(instance.name, reports, values)


def comparison_tables(names=("sec42-small", "sec42-large")) -> list[ComparisonResult]:
    insts = builtin_instances()
    return [compare_concepts(insts[n]) for n in names]


def table_csv(results: list[ComparisonResult], rel_tol: float = 0.01) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for res in results:
        for row in res.rows(rel_tol):
            w.writerow({**row, "value": repr(float(row["value"]))})
    return buf.getvalue()


# --------------------------------------------------------------------------
# region comparison


@dataclass
class RegionCell:
    u: np.ndarray
    costA: float
    costB: float
    winner: str  # "A", "B" or "tie"


def region_comparison(
    instance: ProblemInstance,
    ruleA: DecisionRule,
    ruleB: DecisionRule,
    gridRes: int = 20,
    tie_tol: float = 1e-9,
) -> list[RegionCell]:
    """Ex-post costs of two rules over a grid on the first two uncertain
    coordinates, the remaining ones fixed at the nominal scenario."""
    if instance.n_u < 2:
        raise ValueError("region comparison needs at least two uncertain parameters")
    if instance.n_u > 2 and instance.nominal is None:
        raise ValueError("instance has no nominal scenario to fix the remaining coordinates")
    if gridRes < 2:
        raise ValueError("gridRes must be at least 2")
    box = instance.uBox
    base = instance.nominal.copy() if instance.nominal is not None else box.center.copy()
    g0 = np.linspace(box.lower[0], box.upper[0], gridRes)
    g1 = np.linspace(box.lower[1], box.upper[1], gridRes)
    obj = instance.objective
    cells = []
    for a in g0:
        for b in g1:
            u = base.copy()
            u[0], u[1] = a, b
            ca, cb = obj(ruleA.realize(u)), obj(ruleB.realize(u))
            tol = tie_tol * max(1.0, abs(ca), abs(cb))
            winner = "tie" if abs(ca - cb) <= tol else ("A" if ca < cb else "B")
            cells.append(RegionCell(u, ca, cb, winner))
    return cells


def region_csv(cells: list[RegionCell]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u1", "u2", "costA", "costB", "winner"])
    for c in cells:
        w.writerow([repr(float(c.u[0])), repr(float(c.u[1])), repr(c.costA), repr(c.costB), c.winner])
    return buf.getvalue()


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("REGRET_ADJUST_THREADS", "1")))
    except ValueError:
        return 1


__all__ = [
    "CRITERIA",
    "REFERENCE_VALUES",
    "TABLE_COLUMNS",
    "TIMING_COLUMNS",
    "ComparisonResult",
    "CriteriaValues",
    "RegionCell",
    "RepeatResult",
    "TimingRow",
    "compare_concepts",
    "comparison_tables",
    "reference_best_labels",
    "region_comparison",
    "region_csv",
    "rule_criteria",
    "table_csv",
    "timing_csv",
    "timing_study",
]
