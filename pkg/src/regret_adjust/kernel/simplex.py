"""Two-phase dense tableau simplex (Bland's rule) for inequality-form LPs.

``min c'z  s.t.  G z <= h`` (z free) is solved through its dual in standard
form, ``min h'y  s.t.  G'y = -c, y >= 0``.  The simplex multipliers of the
final dual basis are exactly a primal vertex: the rows of G indexed by the
basis are active at z.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-11


class _Tableau:
    def __init__(self, A, b, cost):
        m, n = A.shape
        self.m, self.n = m, n
        T = np.zeros((m + 1, n + 1))
        T[:m, :n] = A
        T[:m, n] = b
        T[m, :n] = cost
        self.T = T
        self.basis = np.full(m, -1, dtype=int)

    def pivot(self, r, c):
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c

    def price_out(self):
        T = self.T
        for r, c in enumerate(self.basis):
            if c >= 0 and T[-1, c] != 0.0:
                T[-1] -= T[-1, c] * T[r]

    def run(self, allowed, max_iter):
        """Minimize the cost row; returns 'optimal', 'unbounded' or 'iteration_limit'."""
        T = self.T
        for _ in range(max_iter):
            red = T[-1, :-1]
            cand = np.flatnonzero((red < -_EPS) & allowed)
            if cand.size == 0:
                return "optimal"
            c = int(cand[0])  # Bland: smallest index enters
            col = T[:-1, c]
            pos = col > _EPS
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(self.m, np.inf)
            ratios[pos] = T[:-1, -1][pos] / col[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + _EPS * max(1.0, abs(best)))
            r = int(ties[np.argmin(self.basis[ties])])  # Bland: smallest basic index leaves
            self.pivot(r, c)
        return "iteration_limit"


def standard_form(A, b, cost, max_iter=50_000):
    """min cost'y s.t. A y = b, y >= 0.

    Returns (status, y, basis) where basis lists the original columns that
    ended basic (redundant rows dropped).
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1 with artificials n..n+m-1
    tab = _Tableau(np.hstack([A, np.eye(m)]), b, np.concatenate([np.zeros(n), np.ones(m)]))
    tab.basis[:] = np.arange(n, n + m)
    tab.price_out()
    status = tab.run(np.ones(n + m, dtype=bool), max_iter)
    if status == "iteration_limit":
        return status, None, None
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -tab.T[-1, -1] > 1e-9 * scale:
        return "infeasible", None, None
    # drive artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if tab.basis[r] >= n:
            row = tab.T[r, :n]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size:
                tab.pivot(r, int(cand[0]))
                keep.append(r)
        else:
            keep.append(r)
    T = tab.T
    rows = np.array(keep, dtype=int)
    tab2 = _Tableau(T[rows][:, :n], T[rows, -1], cost)
    tab2.basis[:] = tab.basis[rows]
    tab2.price_out()
    status = tab2.run(np.ones(n, dtype=bool), max_iter)
    if status != "optimal":
        return status, None, None
    y = np.zeros(n)
    y[tab2.basis] = tab2.T[:-1, -1]
    return "optimal", y, tab2.basis.copy()


def solve_inequality_lp(c, G, h, max_iter=50_000):
    """min c'z s.t. G z <= h via the dual simplex route.

    Returns (status, z, y) with y the constraint multipliers.  Status is one of
    'optimal', 'infeasible_or_unbounded' (dual infeasible), 'infeasible'
    (dual unbounded) or 'iteration_limit'.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, c.size)
    h = np.asarray(h, dtype=float)
    n = c.size
    if G.shape[0] == 0:
        if np.all(c == 0):
            return "optimal", np.zeros(n), np.zeros(0)
        return "infeasible_or_unbounded", None, None
    status, y, basis = standard_form(G.T, -c, h, max_iter=max_iter)
    if status == "infeasible":
        return "infeasible_or_unbounded", None, None
    if status == "unbounded":
        return "infeasible", None, None
    if status != "optimal":
        return status, None, None
    Gb = G[basis]
    z = np.linalg.lstsq(Gb, h[basis], rcond=None)[0]
    return "optimal", z, y
