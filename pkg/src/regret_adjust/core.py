"""Domain types and exact evaluation under an affine decision rule.

A problem instance is

    min f(x)  s.t.  A x <= b0 + B u   for all u in the box U,

with f(x) = 1/2 x'Hx + c'x + d convex.  Decisions are replaced by the affine
rule x = pi0 + Pi u, where the sparsity of Pi is fixed by an adjustability
mask (which uncertain coordinates each decision may observe).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools
import math

import numpy as np

TOL_PSD = 1e-9
TOL_BOX = 1e-9
TOL_DUP = 1e-7


class InstanceError(ValueError):
    """Raised when an instance violates a structural invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 1:
        raise InstanceError(name, f"expected a vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_matrix(x, name: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, cols or 0)
    if arr.ndim != 2:
        raise InstanceError(name, f"expected a matrix, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise InstanceError(name, f"expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise InstanceError(name, f"expected {cols} columns, got {arr.shape[1]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lower, "Box.lower")
        hi = _as_vector(self.upper, "Box.upper")
        if lo.shape != hi.shape:
            raise InstanceError("Box", "lower and upper differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise InstanceError("Box", "NaN bound")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise InstanceError("Box", f"lower > upper in coordinate {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def degenerate(self) -> np.ndarray:
        return self.lower == self.upper

    def contains(self, u, tol: float = TOL_BOX) -> bool:
        u = np.asarray(u, dtype=float)
        slack = tol * np.maximum(self.width, 1.0)
        return bool(np.all(u >= self.lower - slack) and np.all(u <= self.upper + slack))

    def clip(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def vertices(self) -> np.ndarray:
        """All extremal points, degenerate coordinates counted once.

        Row ``k`` has coordinate ``j`` at its upper bound iff bit ``j`` of the
        k-th free coordinate pattern is set.
        """
        free = np.flatnonzero(~self.degenerate)
        out = np.repeat(self.lower[None, :], 1 << free.size, axis=0)
        for k in range(1 << free.size):
            for b, j in enumerate(free):
                if (k >> b) & 1:
                    out[k, j] = self.upper[j]
        return out

    def vertex(self, bits: int) -> np.ndarray:
        """Vertex selected by a bitmask over free coordinates."""
        u = self.lower.copy()
        for b, j in enumerate(np.flatnonzero(~self.degenerate)):
            if (bits >> b) & 1:
                u[j] = self.upper[j]
        return u

    def is_vertex(self, u, tol: float = TOL_BOX) -> bool:
        u = np.asarray(u, dtype=float)
        slack = tol * np.maximum(self.width, 1.0)
        at_bound = (np.abs(u - self.lower) <= slack) | (np.abs(u - self.upper) <= slack)
        return bool(np.all(at_bound))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.dim)) * self.width

    def split(self, axis: int) -> tuple[Box, Box]:
        mid = 0.5 * (self.lower[axis] + self.upper[axis])
        hi = self.upper.copy()
        hi[axis] = mid
        lo = self.lower.copy()
        lo[axis] = mid
        return Box(self.lower, hi), Box(lo, self.upper)

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """f(x) = 1/2 x'Hx + c'x + d with H symmetric positive semidefinite."""

    H: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        c = _as_vector(self.c, "objective.c")
        H = _as_matrix(self.H, "objective.H", c.size, c.size)
        if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max(initial=0))):
            raise InstanceError("objective.H", "matrix is not symmetric")
        H = 0.5 * (H + H.T)
        H.setflags(write=False)
        scale = max(1.0, float(np.linalg.norm(H, 2))) if H.size else 1.0
        if H.size and np.linalg.eigvalsh(H).min() < -TOL_PSD * scale:
            raise InstanceError("objective.H", "matrix is not positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    @property
    def n(self) -> int:
        return self.c.size

    @cached_property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.H == np.diag(np.diag(self.H))))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.c @ x + self.d)

    def values(self, X: np.ndarray) -> np.ndarray:
        """Row-wise evaluation for a stack of points."""
        X = np.atleast_2d(X)
        return 0.5 * np.einsum("ki,ij,kj->k", X, self.H, X) + X @ self.c + self.d

    def gradient(self, x) -> np.ndarray:
        return self.H @ np.asarray(x, dtype=float) + self.c

    def __eq__(self, other):
        return (
            isinstance(other, QuadraticObjective)
            and np.array_equal(self.H, other.H)
            and np.array_equal(self.c, other.c)
            and self.d == other.d
        )


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Rows A x <= b0 + B u."""

    A: np.ndarray
    b0: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        b0 = _as_vector(self.b0, "constraints.b0")
        A = _as_matrix(self.A, "constraints.A", rows=b0.size)
        B = _as_matrix(self.B, "constraints.B", rows=b0.size)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "B", B)

    @property
    def m(self) -> int:
        return self.b0.size

    def rhs(self, u) -> np.ndarray:
        return self.b0 + self.B @ np.asarray(u, dtype=float)

    def __eq__(self, other):
        return (
            isinstance(other, ConstraintSystem)
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.b0, other.b0)
            and np.array_equal(self.B, other.B)
        )


@dataclass(frozen=True, eq=False)
class AdjustabilityMask:
    """Boolean (n_x, n_u) matrix; True where decision i may react to u_j."""

    allowed: np.ndarray

    def __post_init__(self):
        arr = np.array(self.allowed, dtype=bool)
        if arr.ndim != 2:
            raise InstanceError("mask", f"expected a matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "allowed", arr)

    @classmethod
    def full(cls, n_x: int, n_u: int) -> AdjustabilityMask:
        return cls(np.ones((n_x, n_u), dtype=bool))

    @classmethod
    def static(cls, n_x: int, n_u: int) -> AdjustabilityMask:
        return cls(np.zeros((n_x, n_u), dtype=bool))

    @classmethod
    def causal(cls, kappa: int, P: int, T: int) -> AdjustabilityMask:
        """Decision (p, t) sees demands 1..t-kappa; decisions ordered period-major."""
        allowed = np.zeros((P * T, T), dtype=bool)
        for t in range(1, T + 1):
            seen = max(0, t - kappa)
            allowed[(t - 1) * P : t * P, :seen] = True
        return cls(allowed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.allowed.shape

    @cached_property
    def free_entries(self) -> tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.allowed)

    @property
    def n_free(self) -> int:
        return int(self.allowed.sum())

    def __eq__(self, other):
        return isinstance(other, AdjustabilityMask) and np.array_equal(self.allowed, other.allowed)


@dataclass(frozen=True, eq=False)
class DecisionRule:
    pi0: np.ndarray
    Pi: np.ndarray
    N: float = math.inf

    def __post_init__(self):
        pi0 = _as_vector(self.pi0, "rule.pi0")
        Pi = _as_matrix(self.Pi, "rule.Pi", rows=pi0.size)
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "Pi", Pi)
        object.__setattr__(self, "N", float(self.N))

    @classmethod
    def constant(cls, x, n_u: int, N: float = math.inf) -> DecisionRule:
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros((x.size, n_u)), N)

    @property
    def n_x(self) -> int:
        return self.pi0.size

    @property
    def n_u(self) -> int:
        return self.Pi.shape[1]

    def realize(self, u) -> np.ndarray:
        return self.pi0 + self.Pi @ np.asarray(u, dtype=float)

    def realize_many(self, U: np.ndarray) -> np.ndarray:
        return self.pi0[None, :] + np.atleast_2d(U) @ self.Pi.T

    def respects(self, mask: AdjustabilityMask, tol: float = 0.0) -> bool:
        if mask.shape != self.Pi.shape:
            return False
        return bool(np.all(np.abs(self.Pi[~mask.allowed]) <= tol))

    def within_bound(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.Pi) <= self.N * (1 + tol)))

    def flatten(self) -> np.ndarray:
        """pi = [pi0, Pi row-major], length (n_u + 1) n_x."""
        return np.concatenate([self.pi0, self.Pi.ravel()])

    @classmethod
    def unflatten(cls, pi, n_x: int, n_u: int, N: float = math.inf) -> DecisionRule:
        pi = np.asarray(pi, dtype=float)
        if pi.size != (n_u + 1) * n_x:
            raise ValueError(f"expected {(n_u + 1) * n_x} entries, got {pi.size}")
        return cls(pi[:n_x], pi[n_x:].reshape(n_x, n_u), N)

    def __eq__(self, other):
        return (
            isinstance(other, DecisionRule)
            and np.array_equal(self.pi0, other.pi0)
            and np.array_equal(self.Pi, other.Pi)
            and self.N == other.N
        )


def rule_matrix(u, n_x: int) -> np.ndarray:
    """M(u) with M(u) @ pi = pi0 + Pi u for the flattened rule vector."""
    u = np.asarray(u, dtype=float)
    return np.hstack([np.eye(n_x), np.kron(np.eye(n_x), u[None, :])])


def constraint_matrix_in_pi(A: np.ndarray, u) -> np.ndarray:
    """A^pi(u), satisfying A^pi(u) @ pi == A @ (pi0 + Pi u)."""
    return A @ rule_matrix(u, A.shape[1])


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    objective: QuadraticObjective
    constraints: ConstraintSystem
    uBox: Box
    xBox: Box
    mask: AdjustabilityMask
    N: float
    nominal: np.ndarray | None = None
    name: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n_x, n_u = self.objective.n, self.uBox.dim
        if self.constraints.A.shape[1] != n_x:
            raise InstanceError("constraints.A", f"expected {n_x} columns")
        if self.constraints.B.shape[1] != n_u:
            raise InstanceError("constraints.B", f"expected {n_u} columns")
        if self.xBox.dim != n_x:
            raise InstanceError("xBox", f"expected dimension {n_x}")
        if self.mask.shape != (n_x, n_u):
            raise InstanceError("mask", f"expected shape {(n_x, n_u)}, got {self.mask.shape}")
        if not (self.N > 0):
            raise InstanceError("N", "rule bound must be positive")
        object.__setattr__(self, "N", float(self.N))
        if self.nominal is not None:
            nom = _as_vector(self.nominal, "nominal")
            if nom.size != n_u:
                raise InstanceError("nominal", f"expected length {n_u}")
            if not self.uBox.contains(nom):
                raise InstanceError("nominal", "nominal scenario lies outside uBox")
            object.__setattr__(self, "nominal", nom)

    @property
    def n_x(self) -> int:
        return self.objective.n

    @property
    def n_u(self) -> int:
        return self.uBox.dim

    @property
    def dim_pi(self) -> int:
        return (self.n_u + 1) * self.n_x

    @property
    def n_decision_parameters(self) -> int:
        """Unmasked rule entries: all of pi0 plus the free entries of Pi."""
        return self.n_x + self.mask.n_free

    @cached_property
    def system(self) -> ConstraintSystem:
        """Constraint rows with the finite xBox bounds appended."""
        n = self.n_x
        eye = np.eye(n)
        up = np.isfinite(self.xBox.upper)
        lo = np.isfinite(self.xBox.lower)
        A = np.vstack([self.constraints.A, eye[up], -eye[lo]])
        b0 = np.concatenate([self.constraints.b0, self.xBox.upper[up], -self.xBox.lower[lo]])
        B = np.vstack([self.constraints.B, np.zeros((up.sum() + lo.sum(), self.n_u))])
        return ConstraintSystem(A, b0, B)

    def check_rule(self, rule: DecisionRule) -> None:
        if rule.n_x != self.n_x or rule.n_u != self.n_u:
            raise ValueError(
                f"rule shape ({rule.n_x}, {rule.n_u}) does not match instance ({self.n_x}, {self.n_u})"
            )

    def check_scenario(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_u,):
            raise ValueError(f"scenario must have length {self.n_u}, got shape {u.shape}")
        return u

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return False
        nom_eq = (self.nominal is None and other.nominal is None) or (
            self.nominal is not None
            and other.nominal is not None
            and np.array_equal(self.nominal, other.nominal)
        )
        return (
            self.objective == other.objective
            and self.constraints == other.constraints
            and self.uBox == other.uBox
            and self.xBox == other.xBox
            and self.mask == other.mask
            and self.N == other.N
            and nom_eq
        )


@dataclass(frozen=True)
class Scenario:
    u: np.ndarray
    phi: float
    x_star: np.ndarray


class Discretization:
    """Ordered scenario set with cached perfect-information values."""

    def __init__(self, box: Box, entries=(), tol_dup: float = TOL_DUP):
        self.box = box
        self.tol_dup = tol_dup
        self._entries: list[Scenario] = []
        for e in entries:
            self.add(e.u, e.phi, e.x_star)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, i):
        return self._entries[i]

    @property
    def points(self) -> np.ndarray:
        if not self._entries:
            return np.zeros((0, self.box.dim))
        return np.array([e.u for e in self._entries])

    @property
    def phis(self) -> np.ndarray:
        return np.array([e.phi for e in self._entries])

    def find(self, u) -> int | None:
        """Index of a stored scenario within tol_dup (relative to box width), else None."""
        if not self._entries:
            return None
        scale = np.maximum(self.box.width, 1.0)
        dist = np.max(np.abs(self.points - np.asarray(u)[None, :]) / scale, axis=1)
        k = int(np.argmin(dist))
        return k if dist[k] <= self.tol_dup else None

    def add(self, u, phi: float, x_star) -> bool:
        u = np.asarray(u, dtype=float)
        if not self.box.contains(u):
            raise ValueError("scenario lies outside the uncertainty box")
        if self.find(u) is not None:
            return False
        self._entries.append(Scenario(self.box.clip(u), float(phi), np.asarray(x_star, dtype=float)))
        return True


def evaluate_objective(rule: DecisionRule, instance: ProblemInstance, u) -> float:
    instance.check_rule(rule)
    u = instance.check_scenario(u)
    return instance.objective(rule.realize(u))


def max_violation(rule: DecisionRule, instance: ProblemInstance, u) -> float:
    instance.check_rule(rule)
    u = instance.check_scenario(u)
    sysm = instance.system
    if sysm.m == 0:
        return -math.inf
    return float(np.max(sysm.A @ rule.realize(u) - sysm.rhs(u)))


def regret(rule: DecisionRule, instance: ProblemInstance, u, phi: float) -> float:
    return evaluate_objective(rule, instance, u) - float(phi)


def objective_in_u(rule: DecisionRule, objective: QuadraticObjective):
    """Coefficients (Q, g, c0) with f(pi0 + Pi u) = 1/2 u'Qu + g'u + c0."""
    H, c = objective.H, objective.c
    Pi, pi0 = rule.Pi, rule.pi0
    Q = Pi.T @ H @ Pi
    g = Pi.T @ (H @ pi0 + c)
    c0 = objective(pi0)
    return 0.5 * (Q + Q.T), g, c0


def all_vertices(box: Box, limit: int = 20) -> np.ndarray:
    free = int((~box.degenerate).sum())
    if free > limit:
        raise ValueError(f"vertex enumeration over {free} free coordinates exceeds guard {limit}")
    return box.vertices()


def vertex_bits_iter(d: int):
    return itertools.product((0, 1), repeat=d)
