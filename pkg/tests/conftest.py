import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from regret_adjust.algorithm import AlgoConfig, solve_adjustable_worst_case, solve_min_max_regret
from regret_adjust.core import AdjustabilityMask, Box, ConstraintSystem, ProblemInstance, QuadraticObjective
from regret_adjust.pump import builtin_instances, default_epsilon

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""

    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def instances():
    return builtin_instances()


@pytest.fixture(scope="session")
def small(instances):
    return instances["sec42-small"]


@pytest.fixture(scope="session")
def small_reports(small):
    """Both concepts solved once on the three-period instance."""
    cfg = AlgoConfig(epsilon=default_epsilon("sec42-small"))
    return {
        "regret": solve_min_max_regret(small, cfg),
        "worstcase": solve_adjustable_worst_case(small, cfg),
    }


def scalar_instance(lo=1.0, hi=2.0, upper_row=True, N=10.0, H=2.0, c=0.0):
    """One decision, one uncertain parameter, constraint x <= u (or x >= u)."""
    sign = 1.0 if upper_row else -1.0
    return ProblemInstance(
        QuadraticObjective(np.array([[H]]), np.array([c]), 0.0),
        ConstraintSystem(np.array([[sign]]), np.array([0.0]), np.array([[sign]])),
        Box(np.array([lo]), np.array([hi])),
        Box(np.array([-10.0]), np.array([10.0])),
        AdjustabilityMask.full(1, 1),
        N,
    )


def toy2d(seed=0):
    """A 2-uncertain-parameter instance with a non-trivial regret surface."""
    rng = np.random.default_rng(seed)
    n_x = 2
    L = rng.normal(size=(n_x, n_x))
    H = L @ L.T + 0.5 * np.eye(n_x)
    c = rng.normal(size=n_x)
    A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    B = np.array([[1.0, 0.0], [0.0, 1.0], [-0.5, -0.5]])
    b0 = np.array([0.5, 0.5, 1.5])
    return ProblemInstance(
        QuadraticObjective(H, c, 0.0),
        ConstraintSystem(A, b0, B),
        Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
        Box(np.full(n_x, -5.0), np.full(n_x, 5.0)),
        AdjustabilityMask(np.array([[True, False], [False, True]])),
        10.0,
        nominal=np.zeros(2),
        name="toy2d",
    )
