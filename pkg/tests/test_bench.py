import csv
import io as _io

import numpy as np
import pytest

from regret_adjust import bench
from regret_adjust.algorithm import AlgoConfig
from regret_adjust.core import (
    AdjustabilityMask,
    Box,
    ConstraintSystem,
    DecisionRule,
    ProblemInstance,
    QuadraticObjective,
)
from regret_adjust.testing import random_instance

from conftest import toy2d


def test_region_same_rule_all_ties(small, small_reports):
    rule = small_reports["regret"].rule
    cells = bench.region_comparison(small, rule, rule, 20)
    assert len(cells) == 400 and all(c.winner == "tie" for c in cells)


def test_region_both_concepts_win_somewhere(small, small_reports):
    cells = bench.region_comparison(small, small_reports["regret"].rule, small_reports["worstcase"].rule, 20)
    labels = {c.winner for c in cells}
    assert {"A", "B"} <= labels


def test_region_winners_match_direct_recomputation(small, small_reports):
    ra, rb = small_reports["regret"].rule, small_reports["worstcase"].rule
    cells = bench.region_comparison(small, ra, rb, 20)
    rng = np.random.default_rng(0)
    H, c, d = small.objective.H, small.objective.c, small.objective.d
    for i in rng.choice(len(cells), 10, replace=False):
        cell = cells[i]
        assert np.array_equal(cell.u[2:], small.nominal[2:])
        xa = ra.pi0 + ra.Pi @ cell.u
        xb = rb.pi0 + rb.Pi @ cell.u
        ca = 0.5 * xa @ H @ xa + c @ xa + d
        cb = 0.5 * xb @ H @ xb + c @ xb + d
        assert cell.costA == pytest.approx(ca) and cell.costB == pytest.approx(cb)
        assert cell.winner == ("A" if ca < cb else "B")


def test_region_csv_schema(small, small_reports):
    rule = small_reports["regret"].rule
    text = bench.region_csv(bench.region_comparison(small, rule, rule, 3))
    rows = list(csv.DictReader(_io.StringIO(text)))
    assert list(rows[0]) == ["u1", "u2", "costA", "costB", "winner"] and len(rows) == 9


def test_region_argument_errors(small, small_reports):
    rule = small_reports["regret"].rule
    with pytest.raises(ValueError):
        bench.region_comparison(small, rule, rule, 1)
    no_nominal = ProblemInstance(small.objective, small.constraints, small.uBox, small.xBox, small.mask, small.N)
    with pytest.raises(ValueError, match="nominal"):
        bench.region_comparison(no_nominal, rule, rule, 5)
    one_d = random_instance(0, n_x=2, n_u=1, m=2)
    r1 = DecisionRule.constant(np.zeros(2), 1)
    with pytest.raises(ValueError):
        bench.region_comparison(one_d, r1, r1, 5)


def point_instance():
    u = np.array([1.0, 2.0])
    return ProblemInstance(
        QuadraticObjective(np.eye(2), np.array([-1.0, 0.5])),
        ConstraintSystem(np.array([[1.0, 1.0]]), np.array([1.0]), np.array([[1.0, 0.0]])),
        Box(u, u),
        Box(np.full(2, -3.0), np.full(2, 3.0)),
        AdjustabilityMask.full(2, 2),
        5.0,
    )


def test_timing_degenerate_box_identical_rows():
    rows = bench.timing_study(point_instance(), [0.1, 0.5, 1.0], repeats=2, config=AlgoConfig(epsilon=1e-6))
    keys = ["outerIterations", "infeasibilityAdditions", "regretAdditions", "initialSize", "finalSize"]
    first = [getattr(rows[0], k) for k in keys]
    assert all([getattr(r, k) for k in keys] == first for r in rows)
    lbs = {res.lowerBound for r in rows for res in r.raw}
    assert len(lbs) == 1


def test_timing_full_fraction_has_no_infeasibility_additions():
    inst = random_instance(4, n_x=3, n_u=2, m=3)
    rows = bench.timing_study(inst, [1.0], repeats=2, config=AlgoConfig(epsilon=1e-4))
    assert rows[0].infeasibilityAdditions == 0
    assert rows[0].failures == 0


def test_timing_counts_are_deterministic():
    inst = random_instance(7, n_x=3, n_u=3, m=3)
    cfg = AlgoConfig(epsilon=1e-4)
    a = bench.timing_study(inst, [0.25, 0.5], repeats=2, seed=3, config=cfg)
    b = bench.timing_study(inst, [0.25, 0.5], repeats=2, seed=3, config=cfg, jobs=2)
    for ra, rb in zip(a, b):
        for x, y in zip(ra.raw, rb.raw):
            assert (x.outerIterations, x.infeasibilityAdditions, x.regretAdditions, x.finalSize) == (
                y.outerIterations, y.infeasibilityAdditions, y.regretAdditions, y.finalSize,
            )
            assert x.upperBound == y.upperBound


def test_timing_errors_are_recorded(monkeypatch):
    def boom(instance, cfg):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(bench, "solve_min_max_regret", boom)
    rows = bench.timing_study(toy2d(0), [0.5], repeats=2)
    assert rows[0].failures == 2
    assert all("exploded" in r.error for r in rows[0].raw)
    assert np.isnan(rows[0].total)


def test_timing_rejects_bad_fractions():
    with pytest.raises(ValueError):
        bench.timing_study(toy2d(0), [0.0])
    with pytest.raises(ValueError):
        bench.timing_study(toy2d(0), [1.5])


def test_timing_csv_columns():
    rows = bench.timing_study(point_instance(), [1.0], repeats=1)
    text = bench.timing_csv(rows)
    assert text.splitlines()[0].split(",") == bench.TIMING_COLUMNS


def test_reference_labels():
    small = bench.reference_best_labels("sec42-small")
    assert small == {"worst-case": "worstcase", "nominal": "regret", "max-regret": "regret"}
    large = bench.reference_best_labels("sec42-large")
    assert large == {"worst-case": "worstcase", "nominal": "regret", "max-regret": "regret"}
