"""Dense primal-dual interior-point method for small convex QCQPs.

Solves

    min  1/2 w'P0 w + q0'w
    s.t. 1/2 |F_k w|^2 + a_k'w + b_k <= 0      k = 1..K   (convex quadratic)
         G w <= h                                         (linear)

with slack variables and Mehrotra-style predictor-corrector steps, followed
by an active-set Newton polish that restores the KKT conditions to machine
precision whenever the active set can be identified.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


@dataclass
class IpmResult:
    w: np.ndarray
    lam_q: np.ndarray
    lam_l: np.ndarray
    status: str  # "optimal", "infeasible", "unbounded", "iteration_limit", "stalled"
    iterations: int
    kkt: float
    primal_residual: float
    polished: bool = False


class QcqpData:
    """Normalized problem data; linear rows are scaled to unit norm."""

    def __init__(self, P0, q0, G, h, F=None, a=None, b=None):
        self.P0 = np.asarray(P0, dtype=float)
        self.q0 = np.asarray(q0, dtype=float)
        self.n = self.q0.size
        G = np.asarray(G, dtype=float).reshape(-1, self.n)
        h = np.asarray(h, dtype=float).ravel()
        norms = np.linalg.norm(G, axis=1)
        keep = norms > 0
        if np.any(~keep) and np.any(h[~keep] < 0):
            self.trivially_infeasible = True
        else:
            self.trivially_infeasible = False
        self.row_index = np.flatnonzero(keep)
        self.G = G[keep] / norms[keep, None]
        self.h = h[keep] / norms[keep]
        self.row_scale = norms[keep]
        self.m_full = G.shape[0]
        if F is None:
            self.F = np.zeros((0, 0, self.n))
            self.a = np.zeros((0, self.n))
            self.b = np.zeros(0)
        else:
            self.F = np.asarray(F, dtype=float)
            self.a = np.asarray(a, dtype=float)
            self.b = np.asarray(b, dtype=float)
        self.K = self.b.size
        self.m = self.h.size

    # quadratic constraint values and gradients
    def quad(self, w):
        if self.K == 0:
            return np.zeros(0), np.zeros((0, self.n)), None
        Fw = self.F @ w  # (K, r)
        g = 0.5 * np.einsum("kr,kr->k", Fw, Fw) + self.a @ w + self.b
        J = np.einsum("kr,krn->kn", Fw, self.F) + self.a
        return g, J, Fw

    def quad_hessian(self, lam):
        if self.K == 0:
            return np.zeros((self.n, self.n))
        Fl = self.F * np.sqrt(np.maximum(lam, 0.0))[:, None, None]
        Fl = Fl.reshape(-1, self.n)
        return Fl.T @ Fl

    def objective(self, w):
        return float(0.5 * w @ self.P0 @ w + self.q0 @ w)

    def full_duals(self, lam_l):
        out = np.zeros(self.m_full)
        out[self.row_index] = lam_l / self.row_scale
        return out


def _solve_spd(M, rhs):
    n = M.shape[0]
    reg = 0.0
    scale = max(1.0, float(np.abs(np.diag(M)).max(initial=1.0)))
    for _ in range(8):
        try:
            c = sla.cho_factor(M + reg * np.eye(n), check_finite=False)
            return sla.cho_solve(c, rhs, check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            reg = 1e-14 * scale if reg == 0.0 else reg * 100
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


def interior_point(
    data: QcqpData,
    w0=None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> IpmResult:
    n, K, m = data.n, data.K, data.m
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=float)
    gq, Jq, _ = data.quad(w)
    gl = data.G @ w - data.h
    g = np.concatenate([gq, gl])
    mc = K + m
    s = np.maximum(-g, 1.0)
    lam = np.ones(mc)
    scale_q = max(1.0, float(np.abs(data.q0).max(initial=0.0)))
    scale_h = max(1.0, float(np.abs(data.h).max(initial=0.0)), float(np.abs(data.b).max(initial=0.0)))
    status = "iteration_limit"
    best = None
    it = 0
    last_gain = 0
    wnorm_limit = 1e12
    for it in range(1, max_iter + 1):
        gq, Jq, _ = data.quad(w)
        gl = data.G @ w - data.h
        g = np.concatenate([gq, gl])
        J = np.vstack([Jq, data.G]) if mc else np.zeros((0, n))
        r_d = data.P0 @ w + data.q0 + J.T @ lam
        r_p = g + s
        mu = float(s @ lam) / mc if mc else 0.0
        obj = data.objective(w)
        res_d = float(np.abs(r_d).max(initial=0.0)) / scale_q
        res_p = float(np.abs(r_p).max(initial=0.0)) / scale_h
        gap = mu / max(1.0, abs(obj))
        merit = max(res_d, res_p, gap)
        if best is None or merit < best[0]:
            if best is None or merit < 0.5 * best[0]:
                last_gain = it
            best = (merit, w.copy(), lam.copy(), s.copy())
        if res_d <= tol and res_p <= tol and gap <= tol:
            status = "optimal"
            break
        # rounding floor reached: no meaningful progress is possible any more
        if best[0] <= 1e-6 and (it - last_gain >= 6 or gap < 1e-15):
            status = "stalled"
            break
        if np.abs(w).max(initial=0.0) > wnorm_limit:
            status = "unbounded" if res_p <= 1e-6 else "infeasible"
            break
        if mc and lam.max() > 1e14 * max(1.0, scale_q):
            status = "stalled" if best[0] <= 1e-6 else "infeasible"
            break

        W = data.P0 + data.quad_hessian(lam[:K])
        d = lam / s
        M = W + (J.T * d) @ J

        def direction(r_c):
            # Newton step for the perturbed KKT system with complementarity residual r_c
            rhs = -r_d - J.T @ ((-r_c + lam * r_p) / s)
            dw = _solve_spd(M, rhs)
            dlam = (-r_c + lam * r_p + lam * (J @ dw)) / s
            ds = -r_p - J @ dw
            return dw, dlam, ds

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            with np.errstate(over="ignore"):
                return min(1.0, float(np.min(-v[neg] / dv[neg])))

        if mc == 0:
            dw = _solve_spd(W, -r_d)
            w = w + dw
            continue
        dw_a, dl_a, ds_a = direction(lam * s)
        alpha_a = min(max_step(s, ds_a), max_step(lam, dl_a))
        mu_aff = float((s + alpha_a * ds_a) @ (lam + alpha_a * dl_a)) / mc
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        r_c = lam * s + dl_a * ds_a - sigma * mu
        dw, dl, ds = direction(r_c)
        alpha = min(1.0, 0.995 * min(max_step(s, ds), max_step(lam, dl)))
        mu_new = float((s + alpha * ds) @ (lam + alpha * dl)) / mc
        if mu_new > (1.0 - 0.01 * alpha) * mu:
            # the second-order correction can push complementarity back up;
            # fall back to a plain centering step
            dw, dl, ds = direction(lam * s - max(sigma, 0.3) * mu)
            alpha = min(1.0, 0.995 * min(max_step(s, ds), max_step(lam, dl)))
        w = w + alpha * dw
        s = s + alpha * ds
        lam = lam + alpha * dl
        s = np.maximum(s, 1e-300)
        lam = np.maximum(lam, 1e-300)
    else:
        status = "iteration_limit"

    if status in ("iteration_limit", "stalled") and best is not None and best[0] <= 1e-6:
        status = "stalled"
        _, w, lam, s = best
    gq, Jq, _ = data.quad(w)
    J = np.vstack([Jq, data.G]) if mc else np.zeros((0, n))
    r_d = data.P0 @ w + data.q0 + J.T @ lam
    g = np.concatenate([gq, data.G @ w - data.h])
    kkt = max(
        float(np.abs(r_d).max(initial=0.0)) / scale_q,
        float(np.maximum(g, 0).max(initial=0.0)) / scale_h,
        float(np.abs(lam * g).max(initial=0.0)) / max(1.0, abs(data.objective(w))),
    )
    res = IpmResult(w, lam[:K], lam[K:], status, it, kkt, float(np.maximum(g, 0).max(initial=0.0)))
    res.slack = s
    return res


def kkt_residual(data: QcqpData, w, lam_q, lam_l) -> tuple[float, float]:
    """Scaled (stationarity/complementarity, primal infeasibility)."""
    gq, Jq, _ = data.quad(w)
    gl = data.G @ w - data.h
    r_d = data.P0 @ w + data.q0 + Jq.T @ lam_q + data.G.T @ lam_l
    scale_q = max(1.0, float(np.abs(data.q0).max(initial=0.0)))
    scale_h = max(1.0, float(np.abs(data.h).max(initial=0.0)), float(np.abs(data.b).max(initial=0.0)))
    obj = max(1.0, abs(data.objective(w)))
    comp = max(
        float(np.abs(lam_q * gq).max(initial=0.0)),
        float(np.abs(lam_l * gl).max(initial=0.0)),
    ) / obj
    dual_neg = max(float(np.maximum(-lam_q, 0).max(initial=0.0)), float(np.maximum(-lam_l, 0).max(initial=0.0)))
    stat = max(float(np.abs(r_d).max(initial=0.0)) / scale_q, comp, dual_neg / scale_q)
    prim = max(float(np.maximum(gq, 0).max(initial=0.0)), float(np.maximum(gl, 0).max(initial=0.0))) / scale_h
    return stat, prim


def polish(data: QcqpData, w, active_q, active_l, newton_steps: int = 8):
    """Newton iterations on the KKT equations of a fixed active set.

    Returns (w, lam_q, lam_l) or None when the active set does not yield a
    consistent, dual-feasible point.
    """
    n, K, m = data.n, data.K, data.m
    aq = np.asarray(active_q, dtype=int)
    al = np.asarray(active_l, dtype=int)
    w = np.array(w, dtype=float)
    Ga = data.G[al]
    lam_q_a = np.zeros(aq.size)
    lam_l_a = np.zeros(al.size)
    nq = aq.size
    for step in range(newton_steps):
        gq, Jq, _ = data.quad(w)
        Ja = np.vstack([Jq[aq], Ga])
        W = data.P0.copy()
        if nq:
            Fa = data.F[aq] * np.sqrt(np.maximum(lam_q_a, 0.0))[:, None, None]
            Fa = Fa.reshape(-1, n)
            W += Fa.T @ Fa
        na = Ja.shape[0]
        Kmat = np.zeros((n + na, n + na))
        Kmat[:n, :n] = W
        Kmat[:n, n:] = Ja.T
        Kmat[n:, :n] = Ja
        lam_a = np.concatenate([lam_q_a, lam_l_a])
        r1 = data.P0 @ w + data.q0 + Ja.T @ lam_a
        r2 = np.concatenate([gq[aq], Ga @ w - data.h[al]])
        rhs = -np.concatenate([r1, r2])
        try:
            sol = np.linalg.solve(Kmat, rhs)
            if not np.all(np.isfinite(sol)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(Kmat, rhs, rcond=None)[0]
        w = w + sol[:n]
        lam_a = lam_a + sol[n:]
        lam_q_a, lam_l_a = lam_a[:nq], lam_a[nq:]
        if nq == 0 and step >= 1:
            break
        if np.abs(sol).max(initial=0.0) <= 1e-15 * max(1.0, np.abs(w).max(initial=0.0)):
            break
    lam_q = np.zeros(K)
    lam_q[aq] = lam_q_a
    lam_l = np.zeros(m)
    lam_l[al] = lam_l_a
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(lam_q)) and np.all(np.isfinite(lam_l))):
        return None
    return w, lam_q, lam_l


def identify_active(res: IpmResult, data: QcqpData):
    s = res.slack
    K = data.K
    lam = np.concatenate([res.lam_q, res.lam_l])
    active = np.flatnonzero(lam > s)
    return active[active < K], active[active >= K] - K


def solve(data: QcqpData, w0=None, tol: float = 1e-10, max_iter: int = 200, polish_tol: float = 1e-12):
    """IPM followed by a guarded active-set polish."""
    res = interior_point(data, w0=w0, tol=tol, max_iter=max_iter)
    if res.status not in ("optimal", "stalled"):
        return res
    aq, al = identify_active(res, data)
    stat0, prim0 = kkt_residual(data, res.w, res.lam_q, res.lam_l)
    out = polish(data, res.w, aq, al)
    if out is not None:
        w, lq, ll = out
        stat, prim = kkt_residual(data, w, lq, ll)
        if max(stat, prim) < max(stat0, prim0) and max(stat, prim) <= max(polish_tol, 1e-3 * max(stat0, prim0)):
            res.w, res.lam_q, res.lam_l = w, lq, ll
            res.kkt = max(stat, prim)
            res.primal_residual = prim
            res.polished = True
            res.status = "optimal"
            return res
    res.kkt = max(stat0, prim0)
    res.primal_residual = prim0
    if res.status == "stalled" and res.kkt <= 1e-6:
        res.status = "optimal"
    return res
