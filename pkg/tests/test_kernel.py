import numpy as np
import pytest

from regret_adjust.kernel import (
    MinimaxProblem,
    Piece,
    QpProblem,
    Status,
    solve_lp,
    solve_minimax,
    solve_qp,
)

from oracles import box_lp_max, kkt_residual, minimax_grid_min, qp_by_active_sets, random_qp


def test_qp_bound_active():
    sol = solve_qp(QpProblem(np.array([[2.0]]), np.zeros(1), np.array([[-1.0]]), np.array([-1.0])))
    assert sol.ok
    assert sol.z[0] == pytest.approx(1.0, abs=1e-8)
    assert sol.value == pytest.approx(1.0, abs=1e-8)


def test_qp_unconstrained():
    sol = solve_qp(QpProblem(np.array([[2.0]]), np.zeros(1), np.zeros((0, 1)), np.zeros(0)))
    assert sol.ok and abs(sol.z[0]) < 1e-8 and abs(sol.value) < 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_qp_matches_active_set_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 5)), int(rng.integers(3, 9))
    p = random_qp(rng, n, m)
    sol = solve_qp(p)
    ref, _ = qp_by_active_sets(p.H, p.c, p.G, p.h)
    assert sol.ok
    assert sol.value == pytest.approx(ref, rel=1e-8, abs=1e-8)
    scale = max(1.0, np.abs(p.c).max(), np.abs(p.h).max())
    assert kkt_residual(p, sol) <= 1e-8 * scale
    assert sol.kkt_residual <= 1e-8


def test_qp_lower_level_of_three_period_instance(small):
    """Fixed scenario at the upper demand corner against exhaustive enumeration."""
    sysm = small.system
    u = small.uBox.upper
    p = QpProblem(small.objective.H, small.objective.c, sysm.A, sysm.rhs(u))
    sol = solve_qp(p)
    ref, _ = qp_by_active_sets(p.H, p.c, p.G, p.h, tol=1e-9)
    assert sol.ok
    assert sol.value == pytest.approx(ref, rel=1e-9)


def test_qp_warm_start_returns_same_solution():
    rng = np.random.default_rng(7)
    p = random_qp(rng, 4, 8)
    cold = solve_qp(p)
    warm = solve_qp(p, active_guess=cold.active)
    assert warm.iterations == 0
    assert np.allclose(warm.z, cold.z, atol=1e-8)


def test_qp_wrong_warm_start_still_optimal():
    rng = np.random.default_rng(8)
    p = random_qp(rng, 4, 8)
    cold = solve_qp(p)
    guess = np.setdiff1d(np.arange(8), cold.active)[:3]
    warm = solve_qp(p, active_guess=guess)
    assert warm.ok and warm.value == pytest.approx(cold.value, rel=1e-9, abs=1e-9)


def test_qp_detects_infeasibility():
    G = np.array([[1.0], [-1.0]])
    h = np.array([0.0, -1.0])  # z <= 0 and z >= 1
    sol = solve_qp(QpProblem(np.eye(1), np.zeros(1), G, h))
    assert sol.status is Status.INFEASIBLE


def test_minimax_symmetric_pair():
    pieces = (Piece.from_hessian([[2.0]], [0.0]), Piece.from_hessian([[2.0]], [-4.0], 4.0))
    sol = solve_minimax(MinimaxProblem(pieces, np.zeros((0, 1)), np.zeros(0)))
    assert sol.ok
    assert sol.z[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.value == pytest.approx(1.0, abs=1e-7)


def test_minimax_single_piece_equals_qp():
    rng = np.random.default_rng(11)
    p = random_qp(rng, 3, 5)
    mm = solve_minimax(MinimaxProblem((Piece.from_hessian(p.H, p.c),), p.G, p.h))
    qp = solve_qp(p)
    assert mm.value == pytest.approx(qp.value, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_minimax_matches_grid_search(seed):
    rng = np.random.default_rng(100 + seed)
    pieces = []
    for _ in range(3):
        L = rng.normal(size=(2, 2))
        pieces.append(Piece.from_hessian(L @ L.T + 0.05 * np.eye(2), rng.normal(size=2) * 2, rng.normal()))
    G = np.vstack([np.eye(2), -np.eye(2), [[1.0, 1.0]]])
    h = np.array([1.0, 1.0, 1.0, 1.0, 0.5])
    sol = solve_minimax(MinimaxProblem(tuple(pieces), G, h))
    best, _ = minimax_grid_min(pieces, G, h, (-1.0, -1.0), (1.0, 1.0))
    assert sol.ok
    assert np.all(G @ sol.z <= h + 1e-9)
    assert sol.value == pytest.approx(best, abs=1e-4)
    # every grid point is feasible, so the true minimum cannot exceed the grid's
    assert sol.value <= best + 1e-9


def test_minimax_rejects_indefinite_piece():
    with pytest.raises(ValueError):
        Piece.from_hessian([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])


def test_lp_unit_interval():
    sol = solve_lp([-1.0], np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]))
    assert sol.ok and -sol.value == pytest.approx(1.0)


def test_lp_unit_square():
    G = np.vstack([np.eye(2), -np.eye(2)])
    sol = solve_lp([-1.0, -1.0], G, np.array([1.0, 1.0, 0.0, 0.0]))
    assert sol.ok and np.allclose(sol.z, [1.0, 1.0]) and -sol.value == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(10))
def test_lp_box_against_sign_rule(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    lo = rng.uniform(-3, 0, d)
    hi = lo + rng.uniform(0.1, 3, d)
    c = rng.normal(size=d)
    G = np.vstack([np.eye(d), -np.eye(d)])
    sol = solve_lp(-c, G, np.concatenate([hi, -lo]))
    ref, u = box_lp_max(c, lo, hi)
    assert -sol.value == pytest.approx(ref, rel=1e-10, abs=1e-10)
    assert np.allclose(sol.z, u)


def test_lp_infeasible_and_unbounded():
    G = np.array([[1.0], [-1.0]])
    assert solve_lp([1.0], G, np.array([0.0, -1.0])).status is Status.INFEASIBLE
    assert solve_lp([-1.0], np.array([[-1.0]]), np.array([0.0])).status is Status.UNBOUNDED
