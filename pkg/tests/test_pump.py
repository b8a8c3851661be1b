import dataclasses

import numpy as np
import pytest

from regret_adjust.core import InstanceError
from regret_adjust.pump import BUILTIN_PARAMS, PumpParams, build_instance, index, simulate_levels
from regret_adjust.subproblems import lower_level


def test_three_period_structure(instances):
    inst = instances["sec42-small"]
    assert (inst.n_x, inst.n_u) == (6, 3)
    assert inst.dim_pi == 24
    assert inst.n_decision_parameters == 6 + 2 * (0 + 1 + 2)


def test_twelve_period_parameter_count(instances):
    assert instances["sec41"].n_decision_parameters == 156


def test_builtin_values(instances):
    assert BUILTIN_PARAMS["sec42-small"].e == (1.0, 1.2, 0.8)
    assert instances["sec41"].uBox.upper[7] == 2496.93
    assert np.array_equal(instances["sec42-small"].nominal, [900.0, 1700.0, 1500.0])
    assert np.array_equal(instances["sec42-large"].nominal, [900, 1200, 1500, 1200, 850, 1000, 900])
    assert instances["sec41"].nominal is None


def test_information_lag_two(instances):
    mask = instances["sec42-large"].mask.allowed
    assert mask[2].tolist() == [True] + [False] * 6
    assert not mask[:2].any()
    assert mask[6, :5].all() and not mask[6, 5:].any()


def test_index_is_period_major():
    assert index(1, 1, 2) == 0 and index(2, 1, 2) == 1 and index(1, 2, 2) == 2


def zero_demand_params(**kw):
    base = dict(
        P=2, T=3, kappa=1, N=100.0, areaA=1400.0, hMin=1.0, hMax=50.0, hMinT=5.0, h0=6.0,
        e=(1.0, 1.2, 0.8), c2=(0.000404, 0.0003), c1=(-0.07334, -0.06), c0=(27.78, 20.0),
        Q=(1800.0, 1300.0), uMin=(0.0, 0.0, 0.0), uMax=(0.0, 0.0, 0.0),
    )
    base.update(kw)
    return PumpParams(**base)


def test_zero_demand_per_variable_optimum():
    params = zero_demand_params()
    inst = build_instance(params)
    ll = lower_level(inst, np.zeros(3))
    c2, c1, c0, Q = (np.array(getattr(params, k)) for k in ("c2", "c1", "c0", "Q"))
    x = np.clip(np.maximum(0.0, -c1 / (2 * c2)), 0.0, Q)
    expected = sum(e * np.sum(c2 * x**2 + c1 * x + c0) for e in params.e)
    assert ll.phi == pytest.approx(expected, rel=1e-10)
    assert np.allclose(ll.x_star, np.tile(x, 3), atol=1e-6)


def test_zero_demand_nonnegative_slope_gives_zero_pumping():
    params = zero_demand_params(c1=(0.01, 0.02))
    ll = lower_level(build_instance(params), np.zeros(3))
    assert np.allclose(ll.x_star, 0.0, atol=1e-7)
    assert ll.phi == pytest.approx(sum(params.e) * sum(params.c0), rel=1e-10)


@pytest.mark.parametrize("name", ["sec42-small", "sec42-large"])
def test_rows_agree_with_level_recursion(instances, name):
    params = BUILTIN_PARAMS[name]
    inst = instances[name]
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.uniform(0, 1, inst.n_x) * inst.xBox.upper
        u = inst.uBox.sample(rng, 1)[0]
        h = simulate_levels(params, x, u)
        level, manual = params.h0, []
        for t in range(params.T):
            level += (x[t * params.P : (t + 1) * params.P].sum() - u[t]) / params.areaA
            manual.append(level)
        assert np.allclose(h, manual)
        ok_levels = np.all(h <= params.hMax + 1e-9) and np.all(h >= params.hMin - 1e-9) and h[-1] >= params.hMinT - 1e-9
        c = inst.constraints
        ok_rows = np.all(c.A @ x <= c.b0 + c.B @ u + 1e-9)
        assert ok_levels == ok_rows


def test_parameter_validation():
    good = BUILTIN_PARAMS["sec42-small"]
    with pytest.raises(InstanceError, match="uBox"):
        dataclasses.replace(good, uMin=(2000.0, 0.0, 0.0))
    with pytest.raises(InstanceError, match="c2"):
        dataclasses.replace(good, c2=(0.0, 0.1))
    with pytest.raises(InstanceError, match="e"):
        dataclasses.replace(good, e=(1.0,))
    with pytest.raises(InstanceError, match="h0"):
        dataclasses.replace(good, h0=100.0)


def test_params_dict_round_trip():
    p = BUILTIN_PARAMS["sec41"]
    assert PumpParams.from_dict(p.to_dict()) == p


def test_no_negative_zero_entries(instances):
    for inst in instances.values():
        c = inst.constraints
        for arr in (c.A, c.B):
            assert not np.any(np.signbit(arr) & (arr == 0))
