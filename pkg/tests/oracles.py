"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def qp_by_active_sets(H, c, G, h, tol=1e-9):
    """min 1/2 z'Hz + c'z s.t. Gz <= h for positive definite H, by trying every
    working set: the optimum is the best primal-feasible equality solution."""
    H, c, G, h = (np.asarray(a, dtype=float) for a in (H, c, G, h))
    n, m = c.size, h.size
    best, best_z = np.inf, None
    for k in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            Ga = G[S]
            K = np.block([[H, Ga.T], [Ga, np.zeros((k, k))]])
            rhs = np.concatenate([-c, h[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            z = sol[:n]
            if m and np.max(G @ z - h) > tol * max(1.0, np.abs(h).max()):
                continue
            val = 0.5 * z @ H @ z + c @ z
            if val < best:
                best, best_z = val, z
    return best, best_z


def vertex_max_brute(f, lower, upper):
    best, arg = -np.inf, None
    for bits in itertools.product((0, 1), repeat=len(lower)):
        u = np.where(np.array(bits, dtype=bool), upper, lower)
        v = f(u)
        if v > best:
            best, arg = v, u
    return best, arg


def box_lp_max(c, lower, upper):
    """max c'u over a box: each coordinate at the bound matching the sign."""
    u = np.where(c > 0, upper, lower)
    return float(c @ u), u


def grid(lower, upper, res):
    axes = [np.linspace(lo, hi, res) for lo, hi in zip(lower, upper)]
    return np.array(list(itertools.product(*axes)))


def random_qp(rng, n, m):
    """Strictly convex QP whose constraints hold with slack at a random point."""
    from regret_adjust.kernel import QpProblem

    L = rng.normal(size=(n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    c = rng.normal(size=n) * 3
    G = rng.normal(size=(m, n))
    z_feas = rng.normal(size=n)
    h = G @ z_feas + rng.uniform(0.0, 1.0, m)
    return QpProblem(H, c, G, h)


def kkt_residual(p, sol):
    lam = sol.duals
    r = p.H @ sol.z + p.c + p.G.T @ lam
    slack = p.h - p.G @ sol.z
    return max(np.abs(r).max(), max(0.0, -slack.min()), np.abs(lam * slack).max(), max(0.0, -lam.min()))


def minimax_grid_min(pieces, G, h, lower, upper):
    """Grid search for min over z in {Gz <= h} of the max of quadratic pieces
    (two variables): step 1e-3 over the box, then two zoomed passes."""

    def grid_min(lo1, hi1, lo2, hi2, num):
        Z1, Z2 = np.meshgrid(np.linspace(lo1, hi1, num), np.linspace(lo2, hi2, num), indexing="ij")
        Z = np.stack([Z1.ravel(), Z2.ravel()], axis=1)
        Z = Z[np.all(Z @ G.T <= h + 1e-12, axis=1)]
        vals = np.full(len(Z), -np.inf)
        for pc in pieces:
            F = Z @ pc.factor.T
            vals = np.maximum(vals, 0.5 * (F * F).sum(axis=1) + Z @ pc.c + pc.d)
        k = int(np.argmin(vals))
        return vals[k], Z[k]

    num = int(round((upper[0] - lower[0]) / 1e-3)) + 1
    best, z = grid_min(lower[0], upper[0], lower[1], upper[1], num)
    for half in (2e-3, 2e-5):
        best, z = grid_min(z[0] - half, z[0] + half, z[1] - half, z[1] + half, 401)
    return best, z


def regret_grid(inst, rule, res):
    """Regret of a rule on a res x res grid, each point solved by the lower level."""
    from regret_adjust.subproblems import LowerLevelSolver

    solver = LowerLevelSolver(inst)
    U = grid(inst.uBox.lower, inst.uBox.upper, res)
    R = np.array([inst.objective(rule.realize(u)) - solver(u).phi for u in U])
    return U, R.reshape(res, res)


def grid_modulus(R):
    """Largest change between neighbouring grid points."""
    return max(np.abs(np.diff(R, axis=0)).max(), np.abs(np.diff(R, axis=1)).max())
