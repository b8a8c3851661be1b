"""Random small instances that are feasible by construction."""

from __future__ import annotations

import numpy as np

from .core import AdjustabilityMask, Box, ConstraintSystem, ProblemInstance, QuadraticObjective


def random_instance(
    rng: np.random.Generator | int,
    n_x: int | None = None,
    n_u: int | None = None,
    m: int | None = None,
    mask: str = "random",
    N: float = 10.0,
    margin: float = 0.5,
) -> ProblemInstance:
    """A convex instance whose constant rule x = x_bar is robustly feasible.

    Rows are shifted so that x_bar satisfies every row with ``margin`` for
    every u in the box; x_bar itself sits inside the x-box.
    """
    rng = np.random.default_rng(rng)
    n_x = n_x or int(rng.integers(1, 5))
    n_u = n_u or int(rng.integers(1, 4))
    m = m if m is not None else int(rng.integers(1, 5))
    L = rng.normal(size=(n_x, n_x))
    H = L @ L.T + 0.1 * np.eye(n_x)
    c = rng.normal(size=n_x) * 2
    d = float(rng.normal())
    lo = rng.uniform(-1.0, 0.0, n_u)
    hi = lo + rng.uniform(0.2, 2.0, n_u)
    A = rng.normal(size=(m, n_x))
    B = rng.normal(size=(m, n_u))
    x_bar = rng.uniform(-1.0, 1.0, n_x)
    # min over the box of B_j u
    b_min = np.where(B > 0, B * lo, B * hi).sum(axis=1)
    b0 = A @ x_bar - b_min + margin
    xbox = Box(np.full(n_x, -5.0), np.full(n_x, 5.0))
    if mask == "full":
        allowed = np.ones((n_x, n_u), dtype=bool)
    elif mask == "static":
        allowed = np.zeros((n_x, n_u), dtype=bool)
    else:
        allowed = rng.random((n_x, n_u)) < 0.6
    return ProblemInstance(
        QuadraticObjective(H, c, d),
        ConstraintSystem(A, b0, B),
        Box(lo, hi),
        xbox,
        AdjustabilityMask(allowed),
        N,
        nominal=0.5 * (lo + hi),
        name="random",
    )
