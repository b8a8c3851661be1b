"""Self-contained dense convex solvers: QP, minimax of convex quadratics, LP."""

from __future__ import annotations

from dataclasses import dataclass, field
import enum

import numpy as np

from . import ipm
from .simplex import solve_inequality_lp

TOL_KKT = 1e-8
TOL_OPT = 1e-7
TOL_FEAS = 1e-8
MAX_IPM_ITER = 200


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True, eq=False)
class QpProblem:
    """min 1/2 z'Hz + c'z  s.t.  G z <= h."""

    H: np.ndarray
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        H = np.asarray(self.H, dtype=float).reshape(c.size, c.size)
        G = np.asarray(self.G, dtype=float).reshape(-1, c.size)
        h = np.asarray(self.h, dtype=float).ravel()
        if G.shape[0] != h.size:
            raise ValueError("G and h disagree in row count")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass(frozen=True, eq=False)
class Piece:
    """Quadratic 1/2 z'Hz + c'z + d, stored through a factor F with H = F'F."""

    factor: np.ndarray
    c: np.ndarray
    d: float = 0.0

    @classmethod
    def from_hessian(cls, H, c, d=0.0) -> Piece:
        H = np.asarray(H, dtype=float)
        vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
        if vals.size and vals.min() < -1e-9 * max(1.0, abs(vals).max()):
            raise ValueError("piece Hessian is not positive semidefinite")
        keep = vals > 1e-14 * max(1.0, abs(vals).max(initial=0.0))
        F = (vecs[:, keep] * np.sqrt(vals[keep])).T
        return cls(F, np.asarray(c, dtype=float), float(d))

    @property
    def H(self) -> np.ndarray:
        return self.factor.T @ self.factor

    def __call__(self, z) -> float:
        Fz = self.factor @ z
        return float(0.5 * Fz @ Fz + self.c @ z + self.d)


@dataclass(frozen=True, eq=False)
class MinimaxProblem:
    """min_z max_s piece_s(z)  s.t.  G z <= h."""

    pieces: tuple
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if len(self.pieces) == 0:
            raise ValueError("minimax problem needs at least one piece")
        n = self.pieces[0].c.size
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float).reshape(-1, n))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.pieces[0].c.size

    def values(self, z) -> np.ndarray:
        return np.array([p(z) for p in self.pieces])


@dataclass
class KernelSolution:
    z: np.ndarray | None
    value: float
    status: Status
    kkt_residual: float
    duals: np.ndarray | None = None
    piece_weights: np.ndarray | None = None
    active: np.ndarray | None = None
    iterations: int = 0
    certificate: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def feasibility_margin(G, h) -> tuple[float, np.ndarray | None]:
    """min_z max_j (Gz - h)_j / |G_j|, floored at -1.  Positive means infeasible."""
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n = G.shape[1]
    norms = np.linalg.norm(G, axis=1)
    zero = norms == 0
    if np.any(h[zero] < 0):
        return float(-h[zero].min()), None
    Gn = G[~zero] / norms[~zero, None]
    hn = h[~zero] / norms[~zero]
    if Gn.shape[0] == 0:
        return -1.0, np.zeros(n)
    # variables (z, tau): min tau  s.t.  Gn z - tau <= hn,  -tau <= 1
    Gp = np.vstack([np.hstack([Gn, -np.ones((Gn.shape[0], 1))]), np.eye(n + 1)[[n]] * -1])
    hp = np.concatenate([hn, [1.0]])
    q = np.zeros(n + 1)
    q[-1] = 1.0
    res = ipm.interior_point(ipm.QcqpData(np.zeros((n + 1, n + 1)), q, Gp, hp), tol=1e-10)
    return float(res.w[-1]), res.w[:n]


def _diagnose_failure(G, h, res) -> tuple[Status, float | None]:
    margin, _ = feasibility_margin(G, h)
    if margin > 1e-7:
        return Status.INFEASIBLE, margin
    if res.status == "unbounded":
        return Status.UNBOUNDED, margin
    return Status.ITERATION_LIMIT, margin


def _eqp(p: QpProblem, active):
    """KKT solution of the QP with the rows in ``active`` held at equality."""
    n = p.n
    Ga = p.G[active]
    k = active.size
    K = np.zeros((n + k, n + k))
    K[:n, :n] = p.H
    K[:n, n:] = Ga.T
    K[n:, :n] = Ga
    rhs = np.concatenate([-p.c, p.h[active]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:n], sol[n:]


def _try_active_set(p: QpProblem, active, max_changes: int | None = None) -> KernelSolution | None:
    """Active-set search started from a guessed working set.

    Each step solves the equality-constrained KKT system, then drops the row
    with the most negative multiplier or adds the most violated row.  The
    result is accepted only if it satisfies the full KKT conditions, which
    for a convex QP certifies optimality; otherwise None.
    """
    work = [int(j) for j in np.unique(np.asarray(active, dtype=int))]
    n, m = p.n, p.G.shape[0]
    scale_h = max(1.0, float(np.abs(p.h).max(initial=0.0)))
    scale_c = max(1.0, float(np.abs(p.c).max(initial=0.0)))
    if max_changes is None:
        max_changes = 2 * n + 2
    seen = set()
    for _ in range(max_changes + 1):
        key = tuple(sorted(work))
        if key in seen:
            return None
        seen.add(key)
        act = np.array(key, dtype=int)
        out = _eqp(p, act)
        if out is None:
            return None
        z, y = out
        viol = p.G @ z - p.h if m else np.zeros(0)
        y_bad = int(np.argmin(y)) if y.size else -1
        if y.size and y[y_bad] < -TOL_FEAS * scale_c:
            work.remove(int(act[y_bad]))
            continue
        j = int(np.argmax(viol)) if m else -1
        if m and viol[j] > TOL_FEAS * scale_h:
            if j in work:
                return None
            work.append(j)
            continue
        lam = np.zeros(m)
        lam[act] = np.maximum(y, 0.0)
        r = p.H @ z + p.c + p.G.T @ lam
        kkt = max(float(np.abs(r).max(initial=0.0)) / scale_c, float(np.maximum(viol, 0).max(initial=0.0)) / scale_h)
        if kkt > TOL_KKT:
            return None
        value = float(0.5 * z @ p.H @ z + p.c @ z)
        return KernelSolution(z, value, Status.OPTIMAL, kkt, duals=lam, active=act, iterations=0)
    return None


def solve_qp(p: QpProblem, active_guess=None, tol: float = 1e-10, max_iter: int = MAX_IPM_ITER) -> KernelSolution:
    """Convex QP by interior point + active-set polish.

    ``active_guess`` (row indices) is tried first as an exact KKT solve; a
    correct guess skips the interior-point iterations entirely.
    """
    if active_guess is not None:
        sol = _try_active_set(p, active_guess)
        if sol is not None:
            return sol
    data = ipm.QcqpData(p.H, p.c, p.G, p.h)
    if data.trivially_infeasible:
        return KernelSolution(None, np.inf, Status.INFEASIBLE, np.inf, certificate=1.0)
    res = ipm.solve(data, tol=tol, max_iter=max_iter)
    if res.status != "optimal":
        status, cert = _diagnose_failure(p.G, p.h, res)
        return KernelSolution(res.w, np.nan, status, res.kkt, iterations=res.iterations, certificate=cert)
    z = res.w
    lam = data.full_duals(res.lam_l)
    active = np.flatnonzero(lam > 0) if res.polished else np.flatnonzero(lam > 1e-9 * max(1.0, lam.max(initial=0.0)))
    value = float(0.5 * z @ p.H @ z + p.c @ z)
    return KernelSolution(z, value, Status.OPTIMAL, res.kkt, duals=lam, active=active, iterations=res.iterations,
                          info={"polished": res.polished})


def _stack_pieces(pieces, n):
    r = max(p.factor.shape[0] for p in pieces)
    K = len(pieces)
    F = np.zeros((K, r, n + 1))
    a = np.zeros((K, n + 1))
    b = np.zeros(K)
    for k, p in enumerate(pieces):
        F[k, : p.factor.shape[0], :n] = p.factor
        a[k, :n] = p.c
        a[k, n] = -1.0
        b[k] = p.d
    return F, a, b


def solve_minimax(p: MinimaxProblem, z0=None, tol: float = 1e-10, max_iter: int = MAX_IPM_ITER) -> KernelSolution:
    """min_z max_s piece_s(z) over a polyhedron, via the epigraph QCQP.

    The returned value is the maximum of the pieces evaluated at the returned
    point, so it is consistent with ``z`` by construction.
    """
    n = p.n
    F, a, b = _stack_pieces(p.pieces, n)
    G = np.hstack([p.G, np.zeros((p.G.shape[0], 1))])
    q = np.zeros(n + 1)
    q[-1] = 1.0
    data = ipm.QcqpData(np.zeros((n + 1, n + 1)), q, G, p.h, F, a, b)
    if data.trivially_infeasible:
        return KernelSolution(None, np.inf, Status.INFEASIBLE, np.inf, certificate=1.0)
    w0 = None
    if z0 is not None:
        z0 = np.asarray(z0, dtype=float)
        w0 = np.concatenate([z0, [p.values(z0).max()]])
    res = ipm.solve(data, w0=w0, tol=tol, max_iter=max_iter)
    if res.status != "optimal":
        status, cert = _diagnose_failure(p.G, p.h, res)
        return KernelSolution(res.w[:n], np.nan, status, res.kkt, iterations=res.iterations, certificate=cert)
    z = res.w[:n]
    vals = p.values(z)
    return KernelSolution(
        z,
        float(vals.max()),
        Status.OPTIMAL,
        res.kkt,
        duals=data.full_duals(res.lam_l),
        piece_weights=res.lam_q,
        iterations=res.iterations,
        info={"polished": res.polished, "epigraph": float(res.w[-1])},
    )


def solve_lp(c, G, h) -> KernelSolution:
    """min c'z s.t. G z <= h; an optimal result is a vertex of the polyhedron
    whenever G has full column rank."""
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, c.size)
    h = np.asarray(h, dtype=float)
    status, z, y = solve_inequality_lp(c, G, h)
    if status == "optimal":
        viol = G @ z - h
        scale = max(1.0, float(np.abs(h).max(initial=0.0)))
        r = c + G.T @ y
        kkt = max(float(np.abs(r).max(initial=0.0)), float(np.maximum(viol, 0).max(initial=0.0)) / scale)
        return KernelSolution(z, float(c @ z), Status.OPTIMAL, kkt, duals=y, active=np.flatnonzero(y > 0))
    if status == "infeasible":
        return KernelSolution(None, np.inf, Status.INFEASIBLE, np.inf)
    if status == "infeasible_or_unbounded":
        margin, _ = feasibility_margin(G, h) if G.shape[0] else (-1.0, None)
        if margin > 1e-9:
            return KernelSolution(None, np.inf, Status.INFEASIBLE, np.inf, certificate=margin)
        return KernelSolution(None, -np.inf, Status.UNBOUNDED, np.inf)
    return KernelSolution(None, np.nan, Status.ITERATION_LIMIT, np.inf)


__all__ = [
    "Status",
    "QpProblem",
    "Piece",
    "MinimaxProblem",
    "KernelSolution",
    "solve_qp",
    "solve_minimax",
    "solve_lp",
    "feasibility_margin",
    "TOL_KKT",
    "TOL_OPT",
    "TOL_FEAS",
]
