"""Pump-scheduling instances with uncertain demand.

P pumps feed one tank over T periods.  Pump p delivers x(p, t) in [0, Q_p];
the tank level follows h(t) = h(t-1) + (sum_p x(p, t) - u(t)) / area and must
stay within [hMin, hMax], ending above hMinT.  Energy cost is
sum_t e(t) sum_p (c2_p x^2 + c1_p x + c0_p).  Levels are substituted out so
every constraint is a row of ``A x <= b0 + B u``.

Decisions are ordered period-major: index (t - 1) * P + (p - 1).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import AdjustabilityMask, Box, ConstraintSystem, InstanceError, ProblemInstance, QuadraticObjective


@dataclass(frozen=True)
class PumpParams:
    P: int
    T: int
    kappa: int
    N: float
    areaA: float
    hMin: float
    hMax: float
    hMinT: float
    h0: float
    e: tuple
    c2: tuple
    c1: tuple
    c0: tuple
    Q: tuple
    uMin: tuple
    uMax: tuple
    uNominal: tuple | None = None
    epsilon: float | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("e", "c2", "c1", "c0", "Q", "uMin", "uMax"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.uNominal is not None:
            object.__setattr__(self, "uNominal", tuple(float(v) for v in self.uNominal))
        self.validate()

    def validate(self):
        P, T = self.P, self.T
        if P < 1 or T < 1:
            raise InstanceError("pumpParams", "P and T must be positive")
        if self.kappa < 0:
            raise InstanceError("pumpParams.kappa", "information lag must be nonnegative")
        for name, size in (("e", T), ("uMin", T), ("uMax", T), ("c2", P), ("c1", P), ("c0", P), ("Q", P)):
            if len(getattr(self, name)) != size:
                raise InstanceError(f"pumpParams.{name}", f"expected length {size}")
        if self.uNominal is not None and len(self.uNominal) != T:
            raise InstanceError("pumpParams.uNominal", f"expected length {T}")
        if not (self.hMin <= self.h0 <= self.hMax):
            raise InstanceError("pumpParams.h0", "need hMin <= h0 <= hMax")
        if min(self.c2) <= 0:
            raise InstanceError("pumpParams.c2", "quadratic cost coefficients must be positive")
        if min(self.Q) <= 0:
            raise InstanceError("pumpParams.Q", "pump capacities must be positive")
        if any(lo > hi for lo, hi in zip(self.uMin, self.uMax)):
            raise InstanceError("pumpParams.uBox", "uMin exceeds uMax")
        if self.areaA <= 0:
            raise InstanceError("pumpParams.areaA", "tank area must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> PumpParams:
        return cls(**data)


def index(p: int, t: int, P: int) -> int:
    """Column of x(p, t) with 1-based p and t."""
    return (t - 1) * P + (p - 1)


def build_instance(params: PumpParams, name: str = "") -> ProblemInstance:
    P, T = params.P, params.T
    n = P * T
    e = np.array(params.e)
    c2, c1, c0 = np.array(params.c2), np.array(params.c1), np.array(params.c0)

    diag = np.array([2.0 * e[t] * c2[p] for t in range(T) for p in range(P)])
    lin = np.array([e[t] * c1[p] for t in range(T) for p in range(P)])
    const = float(np.sum(e) * np.sum(c0))
    objective = QuadraticObjective(np.diag(diag), lin, const)

    inv = 1.0 / params.areaA
    A_rows, b_rows, B_rows = [], [], []
    for t in range(1, T + 1):
        flow = np.zeros(n)
        flow[: t * P] = inv
        demand = np.zeros(T)
        demand[:t] = inv
        # h(t) <= hMax
        A_rows.append(flow)
        b_rows.append(params.hMax - params.h0)
        B_rows.append(demand)
        # h(t) >= hMin
        A_rows.append(-flow)
        b_rows.append(params.h0 - params.hMin)
        B_rows.append(-demand)
    flow = np.full(n, inv)
    A_rows.append(-flow)
    b_rows.append(params.h0 - params.hMinT)
    B_rows.append(-np.full(T, inv))
    # adding 0.0 turns the -0.0 entries of negated rows into +0.0
    constraints = ConstraintSystem(np.array(A_rows) + 0.0, np.array(b_rows), np.array(B_rows) + 0.0)

    Q = np.array(params.Q)
    xBox = Box(np.zeros(n), np.tile(Q, T))
    uBox = Box(np.array(params.uMin), np.array(params.uMax))
    mask = AdjustabilityMask.causal(params.kappa, P, T)
    nominal = None if params.uNominal is None else np.array(params.uNominal)
    return ProblemInstance(
        objective,
        constraints,
        uBox,
        xBox,
        mask,
        params.N,
        nominal,
        name=name,
        extra={"pumpParams": params},
    )


def simulate_levels(params: PumpParams, x, u) -> np.ndarray:
    """Tank levels h(1..T) from the recursion."""
    x = np.asarray(x, dtype=float).reshape(params.T, params.P)
    u = np.asarray(u, dtype=float)
    return params.h0 + np.cumsum(x.sum(axis=1) - u) / params.areaA


_COSTS = dict(c2=(0.000404, 0.0003), c1=(-0.07334, -0.06), c0=(27.78, 20.0), Q=(1800.0, 1300.0))

SEC41 = PumpParams(
    P=2,
    T=12,
    kappa=1,
    N=500.0,
    areaA=2200.0,
    hMin=4.2,
    hMax=10.0,
    hMinT=5.0,
    h0=6.0,
    e=(0.5, 0.5, 0.3, 0.6, 1.2, 1.1, 1.0, 0.7, 0.6, 0.9, 1.1, 1.2),
    uMin=(429.65, 758.83, 918.26, 1377.55, 1616.99, 1071.87, 1483.87, 2002.045, 1304.35, 1527.15, 1099.80, 655.59),
    uMax=(474.87, 855.70, 1099.90, 1683.67, 2057.98, 1392.20, 1741.94, 2496.93, 1764.71, 1943.65, 1344.20, 754.28),
    epsilon=1e-3,
    **_COSTS,
)

SEC42_SMALL = PumpParams(
    P=2,
    T=3,
    kappa=1,
    N=10000.0,
    areaA=1400.0,
    hMin=4.5,
    hMax=6.5,
    hMinT=5.0,
    h0=6.3,
    e=(1.0, 1.2, 0.8),
    uMin=(750.00, 1226.80, 1168.83),
    uMax=(1125.00, 2278.35, 1948.05),
    uNominal=(900.0, 1700.0, 1500.0),
    epsilon=1e-5,
    **_COSTS,
)

SEC42_LARGE = PumpParams(
    P=1,
    T=7,
    kappa=2,
    N=10000.0,
    areaA=1400.0,
    hMin=4.5,
    hMax=7.0,
    hMinT=5.0,
    h0=5.5,
    e=(1.0, 1.0, 0.8, 1.0, 1.0, 1.0, 1.0),
    c2=(0.000404,),
    c1=(-0.07334,),
    c0=(27.78,),
    Q=(1800.0,),
    uMin=(750.00, 865.98, 1168.83, 979.59, 772.73, 909.09, 734.69),
    uMax=(1125.00, 1608.25, 1948.05, 1469.39, 944.44, 1111.11, 1102.04),
    uNominal=(900.0, 1200.0, 1500.0, 1200.0, 850.0, 1000.0, 900.0),
    epsilon=1e-6,
)

BUILTIN_PARAMS = {"sec41": SEC41, "sec42-small": SEC42_SMALL, "sec42-large": SEC42_LARGE}


def builtin_instances() -> dict[str, ProblemInstance]:
    return {name: build_instance(p, name) for name, p in BUILTIN_PARAMS.items()}


def default_epsilon(name: str, fallback: float = 1e-4) -> float:
    params = BUILTIN_PARAMS.get(name)
    if params is None or params.epsilon is None:
        return fallback
    return params.epsilon
