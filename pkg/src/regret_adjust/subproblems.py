"""Oracles of the adaptive discretization loop.

* ``lower_level``            perfect-information value phi(u) and minimizer
* ``solve_discretized_master``  min over rules of the max regret (or cost) on a
  finite scenario set, subject to feasibility at those scenarios
* ``max_infeasibility``      most violated row over the whole box (closed form)
* ``max_regret_global``      global max of r(rule, u) by branch and bound
* ``max_cost``               worst-case cost by vertex enumeration
"""

from __future__ import annotations

from dataclasses import dataclass, field
import heapq
import logging
import math

import numpy as np

from . import _ext
from .core import (
    Box,
    DecisionRule,
    Discretization,
    ProblemInstance,
    objective_in_u,
)
from .kernel import MinimaxProblem, Piece, QpProblem, Status, solve_lp, solve_minimax, solve_qp

log = logging.getLogger(__name__)

VERTEX_GUARD = 20


class InstanceInfeasibleError(RuntimeError):
    """F(u) is empty for some scenario, or the discretized master is infeasible."""

    def __init__(self, message: str, u=None):
        super().__init__(message)
        self.u = None if u is None else np.asarray(u)


class SolverFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# lower level


@dataclass
class LowerLevelResult:
    phi: float
    x_star: np.ndarray
    duals: np.ndarray
    active: np.ndarray

    def phi_gradient(self, B: np.ndarray) -> np.ndarray:
        """A subgradient of phi at u (phi is convex): -B'lambda."""
        return -B.T @ self.duals


class LowerLevelSolver:
    """phi(u) = min f(x) s.t. A x <= b0 + B u, with active-set warm starts."""

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        self.system = instance.system
        self._last_active = None
        self.solves = 0
        self.warm_hits = 0

    def __call__(self, u, guess=None) -> LowerLevelResult:
        inst, sysm = self.instance, self.system
        u = np.asarray(u, dtype=float)
        p = QpProblem(inst.objective.H, inst.objective.c, sysm.A, sysm.rhs(u))
        self.solves += 1
        sol = None
        for cand in (guess, self._last_active):
            if cand is None:
                continue
            sol = solve_qp(p, active_guess=cand)
            if sol.ok and sol.iterations == 0:
                self.warm_hits += 1
                break
            sol = None
        if sol is None:
            sol = solve_qp(p)
        if sol.status is Status.INFEASIBLE:
            raise InstanceInfeasibleError(f"lower level infeasible at u={u.tolist()}", u)
        if not sol.ok:
            raise SolverFailure(f"lower level solve failed ({sol.status.value}) at u={u.tolist()}")
        self._last_active = sol.active
        return LowerLevelResult(sol.value + inst.objective.d, sol.z, sol.duals, sol.active)


def lower_level(instance: ProblemInstance, u) -> LowerLevelResult:
    return LowerLevelSolver(instance)(instance.check_scenario(u))


# --------------------------------------------------------------------------
# discretized master


class RuleParametrization:
    """Free rule entries in box-normalized coordinates.

    With u = center + halfwidth * v (v in [-1, 1]) the rule reads
    x = z0 + Pt v where z0 = pi0 + Pi center and Pt = Pi diag(halfwidth).
    Only mask-allowed entries on non-degenerate coordinates are variables.
    """

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        box = instance.uBox
        self.center = box.center
        self.half = 0.5 * box.width
        allowed = instance.mask.allowed & (self.half > 0)[None, :]
        self.rows, self.cols = np.nonzero(allowed)
        self.n_x = instance.n_x
        self.n_free = self.rows.size
        self.n = self.n_x + self.n_free

    def normalized(self, u) -> np.ndarray:
        v = np.zeros_like(self.center)
        nz = self.half > 0
        v[nz] = (np.asarray(u)[nz] - self.center[nz]) / self.half[nz]
        return v

    def realization_matrix(self, u) -> np.ndarray:
        """M with x = M z at scenario u."""
        v = self.normalized(u)
        M = np.zeros((self.n_x, self.n))
        M[:, : self.n_x] = np.eye(self.n_x)
        M[self.rows, self.n_x + np.arange(self.n_free)] = v[self.cols]
        return M

    def to_rule(self, z) -> DecisionRule:
        z = np.asarray(z, dtype=float)
        Pi = np.zeros((self.n_x, self.instance.n_u))
        Pi[self.rows, self.cols] = z[self.n_x :] / self.half[self.cols]
        pi0 = z[: self.n_x] - Pi @ self.center
        return DecisionRule(pi0, Pi, self.instance.N)

    def from_rule(self, rule: DecisionRule) -> np.ndarray:
        z = np.zeros(self.n)
        z[: self.n_x] = rule.pi0 + rule.Pi @ self.center
        z[self.n_x :] = rule.Pi[self.rows, self.cols] * self.half[self.cols]
        return z

    def bound_rows(self):
        """|Pi_ij| <= N expressed on the scaled entries."""
        k = self.n_free
        G = np.zeros((2 * k, self.n))
        G[np.arange(k), self.n_x + np.arange(k)] = 1.0
        G[k + np.arange(k), self.n_x + np.arange(k)] = -1.0
        lim = self.instance.N * self.half[self.cols]
        return G, np.concatenate([lim, lim])


def _objective_factor(H: np.ndarray) -> np.ndarray:
    if np.all(H == np.diag(np.diag(H))):
        diag = np.diag(H)
        keep = diag > 0
        return (np.eye(H.shape[0]) * np.sqrt(np.maximum(diag, 0)))[keep]
    vals, vecs = np.linalg.eigh(H)
    keep = vals > 1e-14 * max(1.0, abs(vals).max(initial=0.0))
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


def _dedupe_rows(G: np.ndarray, h: np.ndarray):
    if G.shape[0] == 0:
        return G, h
    uniq, inv = np.unique(G, axis=0, return_inverse=True)
    hmin = np.full(uniq.shape[0], np.inf)
    np.minimum.at(hmin, inv.ravel(), h)
    return uniq, hmin


@dataclass
class MasterResult:
    rule: DecisionRule
    rK: float
    z: np.ndarray
    values: np.ndarray  # per-scenario regret (or cost) at the rule
    kkt: float
    iterations: int


def solve_discretized_master(
    instance: ProblemInstance,
    disc: Discretization,
    mode: str = "regret",
    param: RuleParametrization | None = None,
) -> MasterResult:
    """min_rule max_{u in disc} [f(rule(u)) - phi(u)]  (mode 'regret')
    or max_{u in disc} f(rule(u))  (mode 'worstcase'), feasible on disc."""
    if len(disc) == 0:
        raise ValueError("discretization is empty")
    if mode not in ("regret", "worstcase"):
        raise ValueError(f"unknown mode {mode!r}")
    param = param or RuleParametrization(instance)
    obj, sysm = instance.objective, instance.system
    L = _objective_factor(obj.H)
    pieces, G_blocks, h_blocks = [], [], []
    for sc in disc:
        M = param.realization_matrix(sc.u)
        offset = sc.phi if mode == "regret" else 0.0
        pieces.append(Piece(L @ M, M.T @ obj.c, obj.d - offset))
        G_blocks.append(sysm.A @ M)
        h_blocks.append(sysm.rhs(sc.u))
    Gb, hb = param.bound_rows()
    G = np.vstack(G_blocks + [Gb])
    h = np.concatenate(h_blocks + [hb])
    G, h = _dedupe_rows(G, h)
    sol = solve_minimax(MinimaxProblem(tuple(pieces), G, h))
    if sol.status is Status.INFEASIBLE:
        raise InstanceInfeasibleError("discretized master problem is infeasible")
    if not sol.ok:
        raise SolverFailure(f"master solve failed ({sol.status.value}, kkt={sol.kkt_residual:.2e})")
    rule = param.to_rule(sol.z)
    values = np.array([p(sol.z) for p in pieces])
    return MasterResult(rule, float(values.max()), sol.z, values, sol.kkt_residual, sol.iterations)


# --------------------------------------------------------------------------
# stage 2


@dataclass
class InfeasibilityResult:
    u: np.ndarray
    violation: float
    row: int


def _violation_rows(instance: ProblemInstance, rule: DecisionRule):
    sysm = instance.system
    C = sysm.A @ rule.Pi - sysm.B
    const = sysm.A @ rule.pi0 - sysm.b0
    return C, const


def max_infeasibility(instance: ProblemInstance, rule: DecisionRule) -> InfeasibilityResult:
    """Closed-form max over the box of the largest constraint violation.

    Each row is affine in u, so its maximum sits at the vertex choosing the
    upper bound exactly where the u-coefficient is positive.
    """
    instance.check_rule(rule)
    C, const = _violation_rows(instance, rule)
    box = instance.uBox
    if C.shape[0] == 0:
        return InfeasibilityResult(box.lower.copy(), -math.inf, -1)
    vals, arg = _ext.rows_box_max(C, const, box.lower, box.upper)
    j = int(np.argmax(vals))  # first maximal row
    return InfeasibilityResult(arg[j].copy(), float(vals[j]), j)


def max_infeasibility_lp(instance: ProblemInstance, rule: DecisionRule) -> InfeasibilityResult:
    """Same quantity through one LP per row (independent route for checks)."""
    C, const = _violation_rows(instance, rule)
    box = instance.uBox
    d = box.dim
    G = np.vstack([np.eye(d), -np.eye(d)])
    h = np.concatenate([box.upper, -box.lower])
    best = None
    for j in range(C.shape[0]):
        sol = solve_lp(-C[j], G, h)
        val = float(C[j] @ sol.z + const[j])
        if best is None or val > best.violation:
            best = InfeasibilityResult(sol.z, val, j)
    return best


# --------------------------------------------------------------------------
# worst-case cost


@dataclass
class MaxCostResult:
    u: np.ndarray
    cost: float


def max_cost(instance: ProblemInstance, rule: DecisionRule) -> MaxCostResult:
    """max_u f(rule(u)); a convex quadratic in u peaks at a box vertex."""
    instance.check_rule(rule)
    box = instance.uBox
    if int((~box.degenerate).sum()) > VERTEX_GUARD:
        raise ValueError(f"vertex enumeration limited to {VERTEX_GUARD} uncertain coordinates")
    Q, g, c0 = objective_in_u(rule, instance.objective)
    _, bits = _ext.vertex_max(Q, g, c0, box.lower, box.upper)
    u = box.vertex(bits)
    return MaxCostResult(u, instance.objective(rule.realize(u)))


# --------------------------------------------------------------------------
# stage 3: global max regret


@dataclass(order=True)
class BnbNode:
    sort_key: float
    seq: int
    box: Box = field(compare=False)
    upperBound: float = field(compare=False)
    bestPoint: tuple | None = field(compare=False, default=None)
    lin_ids: tuple = field(compare=False, default=())
    depth: int = field(compare=False, default=0)


@dataclass
class MaxRegretResult:
    u: np.ndarray
    regretValue: float
    nodesExplored: int
    upperBound: float
    status: str  # "optimal" or "node_limit"
    phi: float
    x_star: np.ndarray
    lower_level_solves: int = 0

    @property
    def gap(self) -> float:
        return self.upperBound - self.regretValue


class _RegretOracle:
    """Evaluates r(rule, u) with caching and records phi linearizations."""

    def __init__(self, instance, rule, solver: LowerLevelSolver):
        self.instance = instance
        self.rule = rule
        self.solver = solver
        self.Q, self.g, self.c0 = objective_in_u(rule, instance.objective)
        self.B = instance.system.B
        self.lin_u: list[np.ndarray] = []
        self.lin_phi: list[float] = []
        self.lin_grad: list[np.ndarray] = []
        self.cache: dict[bytes, tuple[float, LowerLevelResult]] = {}

    def cost(self, u) -> float:
        return self.instance.objective(self.rule.realize(u))

    def evaluate(self, u, guess=None, phi_known=None):
        key = np.asarray(u, dtype=float).tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if phi_known is not None:
            ll = phi_known
        else:
            ll = self.solver(u, guess=guess)
            self.lin_u.append(np.asarray(u, dtype=float))
            self.lin_phi.append(ll.phi)
            self.lin_grad.append(ll.phi_gradient(self.B))
        r = self.cost(u) - ll.phi
        self.cache[key] = (r, ll)
        return r, ll

    def linearized_bound(self, box: Box, lin_id: int):
        """max over box vertices of f^pi(u) - [phi(u_l) + g_l'(u - u_l)] and its argmax."""
        gl = self.lin_grad[lin_id]
        c0 = self.c0 - self.lin_phi[lin_id] + gl @ self.lin_u[lin_id]
        val, bits = _ext.vertex_max(self.Q, self.g - gl, c0, box.lower, box.upper)
        return val, bits

    def cost_vertex_max(self, box: Box) -> float:
        val, _ = _ext.vertex_max(self.Q, self.g, self.c0, box.lower, box.upper)
        return val


def _min_phi_over_box(instance: ProblemInstance, box: Box, guess=None):
    """min over (x, u), u in box, of f(x) s.t. A x - B u <= b0 (one joint QP).

    Returns (value, active rows) so callers can warm-start related boxes.
    """
    obj, sysm = instance.objective, instance.system
    n, d = instance.n_x, box.dim
    H = np.zeros((n + d, n + d))
    H[:n, :n] = obj.H
    c = np.concatenate([obj.c, np.zeros(d)])
    G = np.vstack(
        [
            np.hstack([sysm.A, -sysm.B]),
            np.hstack([np.zeros((d, n)), np.eye(d)]),
            np.hstack([np.zeros((d, n)), -np.eye(d)]),
        ]
    )
    h = np.concatenate([sysm.b0, box.upper, -box.lower])
    sol = solve_qp(QpProblem(H, c, G, h), active_guess=guess)
    if sol.status is Status.INFEASIBLE:
        raise InstanceInfeasibleError("no feasible (x, u) in sub-box")
    if not sol.ok:
        raise SolverFailure(f"sub-box phi minimization failed ({sol.status.value})")
    return sol.value + obj.d, sol.active


def _coupled_bound(instance: ProblemInstance, Q, g, c0, box: Box, guess=None):
    """Upper bound on max over the node of r via one concave maximization.

    r(u) = max over x feasible at u of f^pi(u) - f(x).  Replacing the convex
    f^pi by the overestimator

        sum_i D_i/2 ((l_i + h_i) u_i - l_i h_i) - 1/2 u'(D - Q)u + g'u + c0,

    with D from scaled diagonal dominance (so D - Q is PSD), makes the joint
    problem in (x, u) a convex QP.  The overestimation error is at most
    sum_ij |Q_ij| w_i w_j / 8 and vanishes as the node shrinks.
    Returns (bound, maximizing u, active rows); (inf, None, None) if the QP
    fails.
    """
    obj, sysm = instance.objective, instance.system
    n, d = instance.n_x, box.dim
    w = np.where(box.width > 0, box.width, 1.0)
    absQ = np.abs(Q)
    D = (absQ @ w) / w
    lo, hi = box.lower, box.upper
    Hq = np.zeros((n + d, n + d))
    Hq[:n, :n] = obj.H
    Hq[n:, n:] = np.diag(D) - Q
    cq = np.concatenate([obj.c, -(g + 0.5 * D * (lo + hi))])
    const = c0 - 0.5 * float(D @ (lo * hi)) - obj.d
    G = np.vstack(
        [
            np.hstack([sysm.A, -sysm.B]),
            np.hstack([np.zeros((d, n)), np.eye(d)]),
            np.hstack([np.zeros((d, n)), -np.eye(d)]),
        ]
    )
    h = np.concatenate([sysm.b0, hi, -lo])
    sol = solve_qp(QpProblem(Hq, cq, G, h), active_guess=guess)
    if not sol.ok:
        return math.inf, None, None
    # a slightly loose KKT point can undershoot the true minimum; pad by the
    # residual scaled to the objective magnitude
    pad = sol.kkt_residual * max(1.0, abs(sol.value))
    return const - sol.value + pad, box.clip(sol.z[n:]), sol.active


def max_regret_global(
    instance: ProblemInstance,
    rule: DecisionRule,
    epsBnb: float,
    node_limit: int = 100_000,
    probe_budget: int = 1,
    seeds: Discretization | None = None,
    solver: LowerLevelSolver | None = None,
    interval_bound: bool = True,
) -> MaxRegretResult:
    """Global maximum of r(rule, .) over the uncertainty box by branch and bound.

    Node upper bound: the smallest of
      * max over node vertices of f^pi minus min over the node of phi,
      * min over stored linearizations l of max over node vertices of
        f^pi(u) - phi(u_l) - g_l'(u - u_l), and
      * the coupled concave relaxation of ``_coupled_bound``
    (all valid because f^pi and phi are convex in u), and never more than
    the parent's bound.  Lower bounds come from
    evaluating r at the node center and at up to ``probe_budget`` vertices
    maximizing the linearized bound.  Branching halves the widest coordinate
    relative to the root box.
    """
    instance.check_rule(rule)
    if epsBnb <= 0:
        raise ValueError("epsBnb must be positive")
    box = instance.uBox
    if int((~box.degenerate).sum()) > VERTEX_GUARD:
        raise ValueError(f"vertex bounds limited to {VERTEX_GUARD} uncertain coordinates")
    solver = solver or LowerLevelSolver(instance)
    solves0 = solver.solves
    oracle = _RegretOracle(instance, rule, solver)
    root_width = np.where(box.width > 0, box.width, 1.0)

    best_r, best_u, best_ll = -math.inf, None, None

    def consider(u, r, ll):
        nonlocal best_r, best_u, best_ll
        if r > best_r:
            best_r, best_u, best_ll = r, np.asarray(u, dtype=float), ll

    if seeds is not None:
        for sc in seeds:
            ll = LowerLevelResult(sc.phi, sc.x_star, np.zeros(instance.system.m), np.zeros(0, dtype=int))
            r, ll = oracle.evaluate(sc.u, phi_known=ll)
            consider(sc.u, r, ll)

    if not np.any(~box.degenerate):
        u = box.lower.copy()
        r, ll = oracle.evaluate(u)
        consider(u, r, ll)
        return MaxRegretResult(best_u, best_r, 1, best_r, "optimal", best_ll.phi, best_ll.x_star,
                               solver.solves - solves0)

    def process(node_box: Box, inherited: tuple, hint):
        """Probe a node; returns (upper bound, linearization ids, active-set hints)."""
        hint = hint or {}
        out_hint = dict(hint)
        center = node_box.center
        r, ll = oracle.evaluate(center, guess=hint.get("ll"))
        consider(center, r, ll)
        ids = list(inherited)
        if oracle.lin_u and np.array_equal(oracle.lin_u[-1], center):
            ids.append(len(oracle.lin_u) - 1)
        ids = ids[-4:]
        probes = 0
        while True:
            ub, bits, best_id = math.inf, None, None
            for i in ids:
                val, b = oracle.linearized_bound(node_box, i)
                if val < ub:
                    ub, bits, best_id = val, b, i
            if bits is None or ub <= best_r + epsBnb or probes >= probe_budget:
                break
            v = node_box.vertex(bits)
            if v.tobytes() in oracle.cache:
                break
            rv, llv = oracle.evaluate(v, guess=ll.active)
            consider(v, rv, llv)
            probes += 1
            ids = (ids + [len(oracle.lin_u) - 1])[-4:]
        if ub > best_r + epsBnb:
            cb, cu, act = _coupled_bound(instance, oracle.Q, oracle.g, oracle.c0, node_box, hint.get("cb"))
            if act is not None:
                out_hint["cb"] = act
            ub = min(ub, cb)
            if cu is not None and ub > best_r + epsBnb and cu.tobytes() not in oracle.cache:
                rv, llv = oracle.evaluate(cu, guess=ll.active)
                consider(cu, rv, llv)
        if interval_bound and ub > best_r + epsBnb:
            phi_min, act = _min_phi_over_box(instance, node_box, hint.get("mp"))
            out_hint["mp"] = act
            ub = min(ub, oracle.cost_vertex_max(node_box) - phi_min)
        if best_id is not None:
            ids.remove(best_id)
            ids.append(best_id)
        out_hint["ll"] = ll.active
        return ub, tuple(ids), out_hint

    seq = 0
    ub, ids, hint = process(box, (), None)
    heap = [BnbNode(-ub, seq, box, ub, None, ids, 0)]
    hints = {seq: hint}
    nodes = 1
    status = "optimal"
    closed_ub = -math.inf  # largest bound among discarded nodes
    while heap:
        if heap[0].upperBound <= best_r + epsBnb:
            closed_ub = max(closed_ub, heap[0].upperBound)
            break
        if nodes >= node_limit:
            status = "node_limit"
            break
        node = heapq.heappop(heap)
        hint = hints.pop(node.seq, None)
        axis = int(np.argmax(node.box.width / root_width))
        for child in node.box.split(axis):
            c_ub, c_ids, c_hint = process(child, node.lin_ids, hint)
            c_ub = min(c_ub, node.upperBound)
            nodes += 1
            if c_ub > best_r + epsBnb:
                seq += 1
                heapq.heappush(heap, BnbNode(-c_ub, seq, child, c_ub, None, c_ids, node.depth + 1))
                hints[seq] = c_hint
            else:
                closed_ub = max(closed_ub, c_ub)
    open_ub = heap[0].upperBound if heap else -math.inf
    certified = max(best_r, closed_ub, open_ub)
    return MaxRegretResult(
        best_u,
        best_r,
        nodes,
        certified,
        status,
        best_ll.phi,
        best_ll.x_star,
        solver.solves - solves0,
    )
