import math

import numpy as np
import pytest

from regret_adjust.core import (
    AdjustabilityMask,
    Box,
    ConstraintSystem,
    DecisionRule,
    Discretization,
    InstanceError,
    ProblemInstance,
    QuadraticObjective,
    constraint_matrix_in_pi,
    evaluate_objective,
    max_violation,
    objective_in_u,
    regret,
    rule_matrix,
)
from regret_adjust.subproblems import lower_level

from conftest import scalar_instance


def test_evaluate_objective_at_zero_scenario():
    inst = scalar_instance(lo=-1.0, hi=1.0)
    rule = DecisionRule(np.array([1.0]), np.array([[1.0]]))
    assert evaluate_objective(rule, inst, np.array([0.0])) == pytest.approx(1.0)


def test_evaluate_objective_at_unit_scenario():
    inst = scalar_instance(lo=-1.0, hi=1.0)
    rule = DecisionRule(np.array([1.0]), np.array([[1.0]]))
    assert evaluate_objective(rule, inst, np.array([1.0])) == pytest.approx(4.0)


def test_max_violation_signs():
    inst = scalar_instance(lo=0.0, hi=2.0)
    assert max_violation(DecisionRule.constant([0.0], 1), inst, np.array([1.0])) == pytest.approx(-1.0)
    assert max_violation(DecisionRule.constant([2.0], 1), inst, np.array([1.0])) == pytest.approx(1.0)


def test_regret_of_perfect_information_rule_is_zero():
    inst = scalar_instance(lo=0.0, hi=2.0, c=-3.0)
    u = np.array([1.3])
    ll = lower_level(inst, u)
    rule = DecisionRule.constant(ll.x_star, 1)
    assert regret(rule, inst, u, ll.phi) == pytest.approx(0.0, abs=1e-7)


def test_regret_two_scenario_brute_force():
    inst = scalar_instance(lo=0.0, hi=2.0, c=-3.0)
    rng = np.random.default_rng(3)
    rule = DecisionRule(rng.normal(size=1), rng.normal(size=(1, 1)))
    for u in (np.array([0.0]), np.array([2.0])):
        x = rule.pi0 + rule.Pi @ u
        fx = 0.5 * 2.0 * x[0] ** 2 - 3.0 * x[0]
        # perfect information: min x^2 - 3x s.t. x <= u, |x| <= 10
        xs = min(1.5, u[0])
        phi = xs**2 - 3 * xs
        assert regret(rule, inst, u, lower_level(inst, u).phi) == pytest.approx(fx - phi, abs=1e-9)


def test_box_vertices_and_bits():
    box = Box(np.array([0.0, 1.0, 5.0]), np.array([1.0, 1.0, 7.0]))
    V = box.vertices()
    assert V.shape == (4, 3)  # the degenerate coordinate is counted once
    assert np.array_equal(box.vertex(0b10), np.array([0.0, 1.0, 7.0]))
    assert all(box.is_vertex(v) for v in V)
    assert not box.is_vertex(box.center)


def test_box_split_halves():
    box = Box(np.zeros(2), np.array([2.0, 4.0]))
    a, b = box.split(1)
    assert np.array_equal(a.upper, [2.0, 2.0]) and np.array_equal(b.lower, [0.0, 2.0])


def test_box_rejects_inverted_bounds():
    with pytest.raises(InstanceError, match="Box"):
        Box(np.array([1.0]), np.array([0.0]))


def test_objective_rejects_indefinite():
    with pytest.raises(InstanceError, match="objective.H"):
        QuadraticObjective(np.array([[1.0, 0.0], [0.0, -1.0]]), np.zeros(2))


def test_objective_rejects_asymmetric():
    with pytest.raises(InstanceError, match="symmetric"):
        QuadraticObjective(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2))


def test_instance_shape_checks():
    obj = QuadraticObjective(np.eye(2), np.zeros(2))
    cons = ConstraintSystem(np.ones((1, 2)), np.ones(1), np.ones((1, 3)))
    box = Box(np.zeros(3), np.ones(3))
    xbox = Box(np.zeros(2), np.ones(2))
    with pytest.raises(InstanceError, match="mask"):
        ProblemInstance(obj, cons, box, xbox, AdjustabilityMask.full(3, 2), 1.0)
    with pytest.raises(InstanceError, match="N"):
        ProblemInstance(obj, cons, box, xbox, AdjustabilityMask.full(2, 3), 0.0)
    with pytest.raises(InstanceError, match="nominal"):
        ProblemInstance(obj, cons, box, xbox, AdjustabilityMask.full(2, 3), 1.0, nominal=np.full(3, 2.0))


def test_rule_flatten_round_trip():
    rng = np.random.default_rng(0)
    rule = DecisionRule(rng.normal(size=3), rng.normal(size=(3, 2)), 5.0)
    back = DecisionRule.unflatten(rule.flatten(), 3, 2, 5.0)
    assert back == rule


def test_rule_matrix_identities():
    rng = np.random.default_rng(1)
    rule = DecisionRule(rng.normal(size=3), rng.normal(size=(3, 2)))
    u = rng.normal(size=2)
    assert np.allclose(rule_matrix(u, 3) @ rule.flatten(), rule.realize(u))
    A = rng.normal(size=(4, 3))
    assert np.allclose(constraint_matrix_in_pi(A, u) @ rule.flatten(), A @ rule.realize(u))


def test_objective_in_u_matches_direct_evaluation():
    rng = np.random.default_rng(2)
    L = rng.normal(size=(3, 3))
    obj = QuadraticObjective(L @ L.T, rng.normal(size=3), 1.5)
    rule = DecisionRule(rng.normal(size=3), rng.normal(size=(3, 2)))
    Q, g, c0 = objective_in_u(rule, obj)
    for _ in range(5):
        u = rng.normal(size=2)
        assert 0.5 * u @ Q @ u + g @ u + c0 == pytest.approx(obj(rule.realize(u)))


def test_causal_mask_structure():
    mask = AdjustabilityMask.causal(1, 2, 3)
    assert mask.shape == (6, 3)
    assert mask.n_free == 2 * (0 + 1 + 2)
    assert not mask.allowed[0:2].any()
    assert mask.allowed[4:6, :2].all() and not mask.allowed[4:6, 2].any()


def test_rule_respects_mask():
    mask = AdjustabilityMask(np.array([[True, False]]))
    assert DecisionRule(np.zeros(1), np.array([[3.0, 0.0]])).respects(mask)
    assert not DecisionRule(np.zeros(1), np.array([[0.0, 1e-3]])).respects(mask)


def test_discretization_rejects_duplicates_and_outside_points():
    box = Box(np.zeros(2), np.array([100.0, 1.0]))
    disc = Discretization(box)
    assert disc.add(np.array([50.0, 0.5]), 1.0, np.zeros(1))
    assert not disc.add(np.array([50.0 + 1e-7, 0.5]), 2.0, np.zeros(1))
    assert disc.add(np.array([50.0, 0.6]), 2.0, np.zeros(1))
    assert len(disc) == 2 and disc.find(np.array([50.0, 0.6])) == 1
    with pytest.raises(ValueError):
        disc.add(np.array([101.0, 0.5]), 0.0, np.zeros(1))


def test_system_appends_finite_xbox_rows():
    obj = QuadraticObjective(np.eye(2), np.zeros(2))
    cons = ConstraintSystem(np.ones((1, 2)), np.ones(1), np.zeros((1, 1)))
    xbox = Box(np.array([0.0, -math.inf]), np.array([1.0, math.inf]))
    inst = ProblemInstance(obj, cons, Box(np.zeros(1), np.ones(1)), xbox, AdjustabilityMask.full(2, 1), 1.0)
    assert inst.system.m == 3
