"""Pure numpy versions of the compiled kernels (same signatures and tie rules)."""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 15


def vertex_max(Q, g, c0, lower, upper, tie_tol=1e-12):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    free = np.flatnonzero(lower < upper)
    nf = free.size
    if nf > 62:
        raise ValueError("too many free coordinates for vertex enumeration")
    base = lower.copy()
    width = upper[free] - lower[free]
    best, best_bits = -np.inf, 0
    total = 1 << nf
    shifts = np.arange(nf, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        bits = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        sel = (bits[:, None] >> shifts[None, :]) & 1
        U = np.repeat(base[None, :], bits.size, axis=0)
        U[:, free] += sel * width
        vals = 0.5 * np.einsum("ki,ij,kj->k", U, Q, U) + U @ g + c0
        k = int(np.argmax(vals))
        top = vals[k]
        tol = tie_tol * (1.0 + abs(max(top, best)))
        if top > best + tol:
            cand = np.flatnonzero(vals >= top - tol)
            best, best_bits = float(top), int(bits[cand[0]])
        elif top >= best - tol:
            cand = np.flatnonzero(vals >= best - tol)
            if cand.size and bits[cand[0]] < best_bits:
                best_bits = int(bits[cand[0]])
            best = max(best, float(top))
    return best, best_bits


def rows_box_max(C, const_term, lower, upper):
    C = np.asarray(C, dtype=float)
    arg = np.where(C > 0, upper[None, :], lower[None, :])
    vals = np.einsum("ji,ji->j", C, arg) + const_term
    return vals, arg
