"""Adaptive three-stage discretization for affinely adjustable min-max-regret.

Stage 1 solves the discretized master problem (plus the perfect-information
problems of newly added scenarios), stage 2 searches the box for the most
violated constraint, stage 3 searches it for the largest regret.  Scenarios
found by stages 2 and 3 are added until the rule is feasible everywhere and
its global max regret is within epsilon of the discretized optimum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import enum
import logging
import math
import os
import time

import numpy as np

from . import _ext
from .core import Box, DecisionRule, Discretization, ProblemInstance
from .subproblems import (
    InstanceInfeasibleError,
    LowerLevelSolver,
    RuleParametrization,
    max_cost,
    max_infeasibility,
    max_regret_global,
    solve_discretized_master,
)

log = logging.getLogger(__name__)


class Status(enum.Enum):
    CONVERGED = "Converged"
    ITERATION_BUDGET = "IterationBudget"
    INSTANCE_INFEASIBLE = "InstanceInfeasible"


class AddedBy(enum.Enum):
    INITIAL = "Initial"
    INFEASIBILITY = "Infeasibility"
    MAX_REGRET = "MaxRegret"
    MAX_COST = "MaxCost"


@dataclass(frozen=True)
class GivenScenarios:
    scenarios: tuple

    def __init__(self, scenarios):
        object.__setattr__(self, "scenarios", tuple(tuple(float(v) for v in s) for s in scenarios))


@dataclass(frozen=True)
class RandomExtremalFraction:
    fraction: float
    rngSeed: int = 0

    def __post_init__(self):
        if not (0 < self.fraction <= 1):
            raise ValueError("fraction must lie in (0, 1]")


@dataclass(frozen=True)
class NominalOnly:
    pass


@dataclass
class AlgoConfig:
    epsilon: float = 1e-4
    tolFeas: float = 1e-7
    initialDiscretization: object = None  # None: nominal if available, else one random vertex
    maxOuterIterations: int = 500
    epsBnb: float | None = None  # default epsilon / 10
    nodeLimit: int = 100_000
    probeBudget: int = 1
    seed: int = 0
    timeBudget: float | None = None  # seconds; exceeded -> IterationBudget

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if self.tolFeas < 0:
            raise ValueError("tolFeas must be nonnegative")
        if self.epsBnb is not None and not (self.epsBnb > 0):
            raise ValueError("epsBnb must be positive")

    @property
    def eps_bnb(self) -> float:
        return self.epsBnb if self.epsBnb is not None else self.epsilon / 10


@dataclass
class IterationRecord:
    k: int
    addedScenario: np.ndarray | None
    addedBy: AddedBy | None
    rK: float
    maxRegretUpper: float | None
    stageTimings: dict
    violation: float
    masterKkt: float = 0.0
    bnbNodes: int = 0


@dataclass
class SolveReport:
    status: Status
    mode: str
    rule: DecisionRule
    lowerBound: float
    upperBound: float
    history: list
    discretizationFinal: Discretization
    origins: list = field(default_factory=list)
    config: AlgoConfig | None = None
    wallTime: float = 0.0
    lowerLevelSolves: int = 0
    message: str = ""

    @property
    def gap(self) -> float:
        return self.upperBound - self.lowerBound

    def stage_totals(self) -> dict:
        tot = {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0}
        for rec in self.history:
            for k, v in rec.stageTimings.items():
                tot[k] = tot.get(k, 0.0) + v
        return tot

    def additions(self, by: AddedBy) -> int:
        return sum(1 for rec in self.history if rec.addedBy is by)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("REGRET_ADJUST_THREADS", "1")))
    except ValueError:
        return 1


def materialize_initial(instance: ProblemInstance, spec, seed: int = 0) -> np.ndarray:
    """Scenario array for an initial-discretization choice."""
    box = instance.uBox
    if spec is None:
        spec = NominalOnly() if instance.nominal is not None else RandomExtremalFraction(
            1.0 / (1 << int((~box.degenerate).sum())), seed
        )
    if isinstance(spec, NominalOnly):
        if instance.nominal is None:
            raise ValueError("instance has no nominal scenario")
        return instance.nominal[None, :].copy()
    if isinstance(spec, GivenScenarios):
        pts = np.array(spec.scenarios, dtype=float).reshape(-1, instance.n_u)
        for u in pts:
            if not box.contains(u):
                raise ValueError(f"initial scenario {u.tolist()} lies outside the box")
        return pts
    if isinstance(spec, RandomExtremalFraction):
        d = int((~box.degenerate).sum())
        total = 1 << d
        count = max(1, int(round(spec.fraction * total)))
        rng = np.random.default_rng(spec.rngSeed)
        if count >= total:
            picks = np.arange(total)
        else:
            picks = np.sort(rng.choice(total, size=count, replace=False))
        return np.array([box.vertex(int(b)) for b in picks])
    raise TypeError(f"unknown initial discretization {spec!r}")


BATCH_CHUNK = 64


def _solve_batch(instance, pts, solver):
    """Lower-level solves of many scenarios.

    Points are split into fixed chunks, each warm-started along its own
    chain, so the results do not depend on the number of threads.
    """
    if len(pts) <= BATCH_CHUNK:
        return [solver(u) for u in pts]
    chunks = [np.arange(s, min(len(pts), s + BATCH_CHUNK)) for s in range(0, len(pts), BATCH_CHUNK)]

    def work(idx):
        s = LowerLevelSolver(instance)
        return [s(pts[i]) for i in idx], s.solves

    out = [None] * len(pts)
    threads = _threads()
    if threads == 1:
        results = map(work, chunks)
    else:
        ex = ThreadPoolExecutor(max_workers=threads)
        results = ex.map(work, chunks)
    try:
        for idx, (res, n) in zip(chunks, results):
            for i, r in zip(idx, res):
                out[i] = r
            solver.solves += n
    finally:
        if threads != 1:
            ex.shutdown()
    return out


def _row_tolerance(instance: ProblemInstance, tol: float) -> np.ndarray:
    return tol * np.maximum(1.0, np.abs(instance.system.b0))


def _feasibility(instance, rule, tol_rows):
    """Stage-2 oracle plus the per-row tolerance verdict."""
    res = max_infeasibility(instance, rule)
    sysm = instance.system
    C = sysm.A @ rule.Pi - sysm.B
    const = sysm.A @ rule.pi0 - sysm.b0
    vals, arg = _ext.rows_box_max(C, const, instance.uBox.lower, instance.uBox.upper)
    excess = vals - tol_rows
    feasible = bool(np.all(excess <= 0))
    u = res.u
    if not feasible and res.violation <= tol_rows[res.row]:
        j = int(np.argmax(excess / tol_rows))
        u = arg[j].copy()
    return res, feasible, u


def _solve(instance: ProblemInstance, config: AlgoConfig, mode: str) -> SolveReport:
    t_start = time.perf_counter()
    box = instance.uBox
    solver = LowerLevelSolver(instance)
    param = RuleParametrization(instance)
    tol_rows = _row_tolerance(instance, config.tolFeas)
    disc = Discretization(box)
    origins: list[AddedBy] = []
    history: list[IterationRecord] = []

    def report(status, rule, lower, upper, message=""):
        return SolveReport(
            status, mode, rule, lower, upper, history, disc, origins, config,
            time.perf_counter() - t_start, solver.solves, message,
        )

    t0 = time.perf_counter()
    pts = materialize_initial(instance, config.initialDiscretization, config.seed)
    try:
        lls = _solve_batch(instance, pts, solver)
    except InstanceInfeasibleError as exc:
        empty = DecisionRule(np.zeros(instance.n_x), np.zeros((instance.n_x, instance.n_u)), instance.N)
        return report(Status.INSTANCE_INFEASIBLE, empty, math.nan, math.nan, str(exc))
    for u, ll in zip(pts, lls):
        if disc.add(u, ll.phi, ll.x_star):
            origins.append(AddedBy.INITIAL)
    init_time = time.perf_counter() - t0

    best_upper, best_rule = math.inf, None
    last_lower = -math.inf
    eps_bnb = config.eps_bnb
    tightened = False
    rule = None
    for k in range(1, config.maxOuterIterations + 1):
        timings = {"stage1": init_time if k == 1 else 0.0, "stage2": 0.0, "stage3": 0.0}
        t0 = time.perf_counter()
        try:
            master = solve_discretized_master(instance, disc, mode, param)
        except InstanceInfeasibleError as exc:
            return report(Status.INSTANCE_INFEASIBLE, rule or best_rule, last_lower, best_upper, str(exc))
        timings["stage1"] += time.perf_counter() - t0
        rule, rK = master.rule, master.rK
        last_lower = rK

        t0 = time.perf_counter()
        inf, feasible, u_inf = _feasibility(instance, rule, tol_rows)
        timings["stage2"] += time.perf_counter() - t0
        rec = IterationRecord(k, None, None, rK, None, timings, inf.violation, master.kkt)
        history.append(rec)
        log.info("iteration %d: |U|=%d rK=%.10g violation=%.3g master %.2fs", k, len(disc), rK, inf.violation, timings["stage1"])

        if not feasible:
            t0 = time.perf_counter()
            try:
                ll = solver(u_inf)
            except InstanceInfeasibleError as exc:
                return report(Status.INSTANCE_INFEASIBLE, rule, rK, best_upper, str(exc))
            added = disc.add(u_inf, ll.phi, ll.x_star)
            timings["stage1"] += time.perf_counter() - t0
            if not added:
                return report(Status.ITERATION_BUDGET, rule, rK, best_upper,
                              "infeasible vertex already in discretization")
            origins.append(AddedBy.INFEASIBILITY)
            rec.addedScenario, rec.addedBy = u_inf, AddedBy.INFEASIBILITY
        else:
            while True:
                t0 = time.perf_counter()
                if mode == "regret":
                    mr = max_regret_global(
                        instance, rule, eps_bnb, node_limit=config.nodeLimit,
                        probe_budget=config.probeBudget, seeds=disc, solver=solver,
                    )
                    u_new, upper, phi, x_star = mr.u, mr.regretValue, mr.phi, mr.x_star
                    rec.bnbNodes += mr.nodesExplored
                    by = AddedBy.MAX_REGRET
                else:
                    mc = max_cost(instance, rule)
                    u_new, upper = mc.u, mc.cost
                    phi = x_star = None
                    by = AddedBy.MAX_COST
                timings["stage3"] += time.perf_counter() - t0
                rec.maxRegretUpper = upper
                log.info("iteration %d: stage 3 value %.10g gap %.3g (%.2fs, %d nodes)", k, upper, upper - rK, timings["stage3"], rec.bnbNodes)
                if upper < best_upper:
                    best_upper, best_rule = upper, rule
                if upper - rK < config.epsilon:
                    return report(Status.CONVERGED, rule, rK, best_upper)
                if disc.find(u_new) is not None:
                    if mode == "regret" and not tightened:
                        tightened = True
                        eps_bnb /= 10
                        continue
                    return report(Status.ITERATION_BUDGET, best_rule, rK, best_upper,
                                  "stage-3 scenario already in discretization")
                break
            t0 = time.perf_counter()
            if phi is None:
                try:
                    ll = solver(u_new)
                except InstanceInfeasibleError as exc:
                    return report(Status.INSTANCE_INFEASIBLE, rule, rK, best_upper, str(exc))
                phi, x_star = ll.phi, ll.x_star
            disc.add(u_new, phi, x_star)
            timings["stage1"] += time.perf_counter() - t0
            origins.append(by)
            rec.addedScenario, rec.addedBy = u_new, by
        if config.timeBudget is not None and time.perf_counter() - t_start > config.timeBudget:
            return report(Status.ITERATION_BUDGET, best_rule or rule, last_lower, best_upper, "time budget exhausted")
    return report(Status.ITERATION_BUDGET, best_rule or rule, last_lower, best_upper, "outer iteration budget exhausted")


def solve_min_max_regret(instance: ProblemInstance, config: AlgoConfig | None = None) -> SolveReport:
    return _solve(instance, config or AlgoConfig(), "regret")


def solve_adjustable_worst_case(instance: ProblemInstance, config: AlgoConfig | None = None) -> SolveReport:
    return _solve(instance, config or AlgoConfig(), "worstcase")


@dataclass
class RuleEvaluation:
    u: np.ndarray
    cost: float
    regret: float
    violation: float


def evaluate_rule(instance: ProblemInstance, rule: DecisionRule, scenarios) -> list[RuleEvaluation]:
    """Ex-post cost, regret and violation of a rule on given scenarios.

    ``scenarios`` may contain the string "nominal", resolved to the
    instance's nominal scenario.
    """
    instance.check_rule(rule)
    solver = LowerLevelSolver(instance)
    sysm = instance.system
    out = []
    for u in scenarios:
        if isinstance(u, str):
            if u != "nominal":
                raise ValueError(f"unknown scenario keyword {u!r}")
            if instance.nominal is None:
                raise ValueError("instance has no nominal scenario")
            u = instance.nominal
        u = instance.check_scenario(u)
        if not instance.uBox.contains(u):
            raise ValueError(f"scenario {u.tolist()} lies outside the box")
        x = rule.realize(u)
        cost = instance.objective(x)
        ll = solver(u)
        viol = float(np.max(sysm.A @ x - sysm.rhs(u))) if sysm.m else -math.inf
        out.append(RuleEvaluation(u.copy(), cost, cost - ll.phi, viol))
    return out


@dataclass
class Certificate:
    violation: float
    feasible: bool
    criterion_value: float  # global max regret (or max cost) of the rule
    criterion_upper: float
    gap: float
    passed: bool


def verify_certificate(
    instance: ProblemInstance, report: SolveReport, epsilon: float | None = None, tolFeas: float | None = None
) -> Certificate:
    """Re-run stage 2 and stage 3 on a reported rule."""
    cfg = report.config or AlgoConfig()
    eps = epsilon if epsilon is not None else cfg.epsilon
    tol = tolFeas if tolFeas is not None else cfg.tolFeas
    rule = report.rule
    inf, feasible, _ = _feasibility(instance, rule, _row_tolerance(instance, tol))
    if report.mode == "regret":
        mr = max_regret_global(instance, rule, cfg.eps_bnb, node_limit=cfg.nodeLimit)
        value, upper = mr.regretValue, mr.upperBound
    else:
        mc = max_cost(instance, rule)
        value = upper = mc.cost
    gap = value - report.lowerBound
    return Certificate(inf.violation, feasible, value, upper, gap, feasible and gap < eps)


__all__ = [
    "AddedBy",
    "AlgoConfig",
    "Certificate",
    "GivenScenarios",
    "IterationRecord",
    "NominalOnly",
    "RandomExtremalFraction",
    "RuleEvaluation",
    "SolveReport",
    "Status",
    "evaluate_rule",
    "materialize_initial",
    "solve_adjustable_worst_case",
    "solve_min_max_regret",
    "verify_certificate",
]
